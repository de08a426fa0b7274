#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rse/metrics.hpp"
#include "rse/model.hpp"
#include "rse/train.hpp"

namespace rse {

inline constexpr std::array<const char*, kSubspaces> kSubspaceLabels{"Y", "U", "V"};

/// Encoder means of every noisy and clean patch, per subspace.
struct LatentSamples {
    std::array<Eigen::MatrixXd, kSubspaces> noisy, clean;  // N x d each
};

inline LatentSamples collect_latents(Vae& model, const std::vector<ImagePair>& pairs, int overlap) {
    if (pairs.empty()) throw InvalidArgument("no images to encode");
    std::array<std::vector<Matrix>, kSubspaces> nz, cz;
    Eigen::Index rows = 0;
    for (const auto& p : pairs) {
        const Encoding en = model.encode(as_batch(decompose(rgb_to_yuv(p.noisy), model.patch(), overlap)));
        const Encoding ec = model.encode(as_batch(decompose(rgb_to_yuv(p.clean), model.patch(), overlap)));
        for (int s = 0; s < kSubspaces; ++s) {
            nz[s].push_back(en.mu[s]);
            cz[s].push_back(ec.mu[s]);
        }
        rows += en.mu[0].rows();
    }
    LatentSamples out;
    for (int s = 0; s < kSubspaces; ++s) {
        out.noisy[s].resize(rows, model.latent());
        out.clean[s].resize(rows, model.latent());
        Eigen::Index r = 0;
        for (std::size_t i = 0; i < nz[s].size(); ++i) {
            out.noisy[s].middleRows(r, nz[s][i].rows()) = nz[s][i];
            out.clean[s].middleRows(r, cz[s][i].rows()) = cz[s][i];
            r += nz[s][i].rows();
        }
    }
    return out;
}

/// Joint PCA of noisy and clean latents of one subspace (noisy rows first).
struct SubspaceProjection {
    PcaResult pca;
    Eigen::Index noisy_rows = 0;

    Eigen::Vector2d noisy_centroid() const { return pca.projection.topRows(noisy_rows).colwise().mean(); }
    Eigen::Vector2d clean_centroid() const {
        return pca.projection.bottomRows(pca.projection.rows() - noisy_rows).colwise().mean();
    }
    double centroid_distance() const { return (noisy_centroid() - clean_centroid()).norm(); }
};

inline std::array<SubspaceProjection, kSubspaces> project_latents(const LatentSamples& ls) {
    std::array<SubspaceProjection, kSubspaces> out;
    for (int s = 0; s < kSubspaces; ++s) {
        Eigen::MatrixXd all(ls.noisy[s].rows() + ls.clean[s].rows(), ls.noisy[s].cols());
        all << ls.noisy[s], ls.clean[s];
        out[s].pca = pca_project(all);
        out[s].noisy_rows = ls.noisy[s].rows();
    }
    return out;
}

/// Columns: subspace, class, pc1, pc2. 2 * 3 * N rows for N patches.
inline void write_latent_csv(const std::array<SubspaceProjection, kSubspaces>& proj, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << "subspace,class,pc1,pc2\n";
    for (int s = 0; s < kSubspaces; ++s) {
        const auto& p = proj[s].pca.projection;
        for (Eigen::Index r = 0; r < p.rows(); ++r)
            os << kSubspaceLabels[s] << ',' << (r < proj[s].noisy_rows ? "noisy" : "clean") << ','
               << format_metric(p(r, 0)) << ',' << format_metric(p(r, 1)) << '\n';
    }
}

} // namespace rse
