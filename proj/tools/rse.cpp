// Command-line front end: dataset synthesis, training, self-enhancement,
// denoising, evaluation and latent-space export.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rse/checkpoint.hpp"
#include "rse/config.hpp"
#include "rse/data.hpp"
#include "rse/latent.hpp"
#include "rse/metrics.hpp"
#include "rse/png_io.hpp"
#include "rse/rl.hpp"
#include "rse/train.hpp"

namespace fs = std::filesystem;
using namespace rse;

namespace {

struct Shared {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> preset;
    std::string out;
};

void add_shared(CLI::App* cmd, Shared& s, bool out_required = true) {
    cmd->add_option("--config", s.config, "TOML configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", s.seed, "master seed");
    cmd->add_option("--preset", s.preset, "celeba-synth or sidd-style")
        ->check(CLI::IsMember({"celeba-synth", "sidd-style"}));
    auto* o = cmd->add_option("--out", s.out, "output path");
    if (out_required) o->required();
}

RunConfig resolve(const Shared& s) {
    std::optional<fs::path> file;
    if (s.config) file = *s.config;
    RunConfig rc = load_run_config(file, s.preset);
    if (s.seed) rc.set_seed(*s.seed);
    return rc;
}

/// First part for training, the last `holdout` fraction (at least one pair) for evaluation.
std::pair<std::vector<ImagePair>, std::vector<ImagePair>> split(const std::vector<ImagePair>& all, double holdout) {
    if (all.size() < 2) throw InvalidArgument("dataset needs at least two pairs to split");
    auto held = static_cast<std::size_t>(std::ceil(holdout * static_cast<double>(all.size())));
    held = std::clamp<std::size_t>(held, 1, all.size() - 1);
    const auto cut = all.begin() + static_cast<std::ptrdiff_t>(all.size() - held);
    return {{all.begin(), cut}, {cut, all.end()}};
}

std::vector<ImagePair> select(const std::vector<ImagePair>& all, const std::string& which, double holdout) {
    if (which == "all") return all;
    auto [train, eval] = split(all, holdout);
    return which == "train" ? train : eval;
}

int overlap_of(const Checkpoint& ck, std::optional<int> override_overlap) {
    if (override_overlap) return *override_overlap;
    return ck.config.at("train").at("overlap").get<int>();
}

double holdout_of(const Checkpoint& ck) { return ck.config.value("holdout", 0.2); }

void write_loss_header(std::ofstream& os) { os << "round,epoch,steps,mse,kl,reg,tran_y,tran_u,tran_v,vae\n"; }

void write_loss_row(std::ofstream& os, int round, const EpochStats& s) {
    os << round << ',' << s.epoch << ',' << s.steps << ',' << format_metric(s.mean.mse) << ','
       << format_metric(s.mean.kl) << ',' << format_metric(s.mean.reg) << ',' << format_metric(s.mean.tran[0]) << ','
       << format_metric(s.mean.tran[1]) << ',' << format_metric(s.mean.tran[2]) << ',' << format_metric(s.mean.vae())
       << '\n';
    os.flush();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Patch-based VAE denoiser with latent transforms and SAC self-enhancement"};
    app.require_subcommand(1);

    // fixture
    Shared fx;
    int fx_count = 200, fx_size = 64;
    auto* fixture = app.add_subcommand("fixture", "write synthetic clean scenes as PNG files");
    add_shared(fixture, fx);
    fixture->add_option("--count", fx_count, "number of images")->check(CLI::PositiveNumber);
    fixture->add_option("--size", fx_size, "image side in pixels")->check(CLI::PositiveNumber);

    // synth
    Shared sy;
    std::string sy_in;
    std::optional<double> sy_sigma;
    auto* synth = app.add_subcommand("synth", "build a noisy/clean pair dataset from clean PNGs");
    add_shared(synth, sy);
    synth->add_option("--in", sy_in, "directory of clean PNG images")->required()->check(CLI::ExistingDirectory);
    synth->add_option("--sigma", sy_sigma, "Gaussian noise standard deviation on [0,1] scale");

    // train
    Shared tr;
    std::string tr_data;
    std::optional<int> tr_epochs, tr_rounds;
    auto* train = app.add_subcommand("train", "train the VAE and latent transforms");
    add_shared(train, tr);
    train->add_option("--data", tr_data, "pair dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--epochs", tr_epochs, "override the epoch budget");
    train->add_option("--recursive-rounds", tr_rounds, "retrain with denoised outputs appended, N times");

    // enhance
    Shared en;
    std::string en_ckpt, en_data, en_split = "eval";
    std::optional<int> en_epochs;
    auto* enhance = app.add_subcommand("enhance", "tune transform weights with soft actor-critic");
    add_shared(enhance, en);
    enhance->add_option("--ckpt", en_ckpt, "pretrained checkpoint")->required()->check(CLI::ExistingDirectory);
    enhance->add_option("--data", en_data, "pair dataset directory")->required()->check(CLI::ExistingDirectory);
    enhance->add_option("--rl-epochs", en_epochs, "number of RL episodes");
    enhance->add_option("--split", en_split, "eval, train or all")->check(CLI::IsMember({"eval", "train", "all"}));

    // denoise
    Shared dn;
    std::string dn_ckpt, dn_in;
    std::optional<int> dn_overlap;
    bool dn_crop = false;
    auto* denoise = app.add_subcommand("denoise", "denoise a PNG file or a directory of PNGs");
    add_shared(denoise, dn);
    denoise->add_option("--ckpt", dn_ckpt, "checkpoint")->required()->check(CLI::ExistingDirectory);
    denoise->add_option("--in", dn_in, "PNG file or directory")->required()->check(CLI::ExistingPath);
    denoise->add_option("--overlap", dn_overlap, "patch overlap at inference");
    denoise->add_flag("--center-crop", dn_crop, "crop to the largest size the patch grid tiles");

    // eval
    Shared ev;
    std::string ev_ckpt, ev_data, ev_split = "eval";
    std::optional<int> ev_overlap;
    auto* eval = app.add_subcommand("eval", "PSNR, SSIM and UQI before and after denoising");
    add_shared(eval, ev);
    eval->add_option("--ckpt", ev_ckpt, "checkpoint")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--data", ev_data, "pair dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--overlap", ev_overlap, "patch overlap at inference");
    eval->add_option("--split", ev_split, "eval, train or all")->check(CLI::IsMember({"eval", "train", "all"}));

    // viz-latent
    Shared vz;
    std::string vz_ckpt, vz_data, vz_split = "eval";
    auto* viz = app.add_subcommand("viz-latent", "PCA projection of noisy and clean latents per subspace");
    add_shared(viz, vz);
    viz->add_option("--ckpt", vz_ckpt, "checkpoint")->required()->check(CLI::ExistingDirectory);
    viz->add_option("--data", vz_data, "pair dataset directory")->required()->check(CLI::ExistingDirectory);
    viz->add_option("--split", vz_split, "eval, train or all")->check(CLI::IsMember({"eval", "train", "all"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*fixture) {
            const RunConfig rc = resolve(fx);
            write_synthetic_fixture(fx.out, fx_count, fx_size, rc.seed);
            std::cout << "wrote " << fx_count << " scenes to " << fx.out << '\n';
        } else if (*synth) {
            RunConfig rc = resolve(sy);
            if (sy_sigma) rc.train.sigma = *sy_sigma;
            validate(rc);
            const auto pairs = build_pair_dataset(sy_in, rc.train.sigma, rc.seed);
            write_pair_dataset(sy.out, pairs, rc.train.sigma, rc.seed);
            std::cout << "wrote " << pairs.size() << " pairs to " << sy.out << '\n';
        } else if (*train) {
            RunConfig rc = resolve(tr);
            if (tr_epochs) rc.train.epochs = *tr_epochs;
            if (tr_rounds) rc.recursive_rounds = *tr_rounds;
            validate(rc);
            const auto all = load_pair_dataset(tr_data);
            const auto [train_set, eval_set] = split(all, rc.holdout);

            fs::create_directories(tr.out);
            std::ofstream loss(fs::path(tr.out) / "loss.csv");
            write_loss_header(loss);
            int round = -1;
            auto res = train_recursive(train_set, rc.train, rc.recursive_rounds,
                                       [&](const EpochStats& s, Vae&, const nn::Adam&) {
                                           if (s.epoch == 1) ++round;
                                           write_loss_row(loss, round, s);
                                           std::cout << "round " << round << " epoch " << s.epoch << " vae "
                                                     << s.mean.vae() << " tran " << s.mean.tran_total() << '\n';
                                       });
            save_checkpoint(tr.out, res.model, res.optimizer, rc.to_json(), res.rng_state);
            std::cout << "checkpoint written to " << tr.out << '\n';
        } else if (*enhance) {
            Checkpoint ck = load_checkpoint(en_ckpt);
            RunConfig rc = resolve(en);
            if (!en.seed) rc.set_seed(ck.config.at("seed").get<std::uint64_t>());
            if (!en.preset && !en.config) rc.sac.psnr_target = ck.config.at("rl").at("psnr_target").get<double>();
            if (en_epochs) rc.sac.epochs = *en_epochs;
            validate(rc);
            const auto pairs = select(load_pair_dataset(en_data), en_split, holdout_of(ck));
            const int overlap = overlap_of(ck, std::nullopt);

            auto res = rl::run_self_enhancement(ck.model, pairs, overlap, rc.sac, [](const rl::TrajectoryRow& r) {
                std::cout << "epoch " << r.epoch << " step " << r.step << " psnr " << r.mean_psnr << " reward "
                          << r.reward << '\n';
            });
            nlohmann::json config = ck.config;
            config["rl"] = rc.sac;
            save_checkpoint(en.out, res.best_model, ck.optimizer, config, ck.rng_state, res.meta(rc.sac));
            rl::write_trajectory_csv(res.trajectory, fs::path(en.out) / "trajectory.csv");
            std::cout << "psnr " << res.initial_psnr << " -> " << res.best_psnr << '\n';
        } else if (*denoise) {
            Checkpoint ck = load_checkpoint(dn_ckpt);
            const int overlap = overlap_of(ck, dn_overlap);
            auto run = [&](const fs::path& src, const fs::path& dst) {
                ImageBuffer img = load_image(src);
                if (dn_crop) {
                    const PatchGrid g{ck.model.patch(), overlap, img.height(), img.width()};
                    if (g.overlap < 0 || g.stride() < 1) throw GeometryError("overlap must satisfy 0 <= overlap < patch size");
                    img = center_crop(img, g.largest_valid(img.height()), g.largest_valid(img.width()));
                }
                save_image(denoise_image(img, ck.model, overlap), dst);
            };
            const fs::path in(dn_in);
            if (fs::is_directory(in)) {
                fs::create_directories(dn.out);
                for (const auto& f : list_pngs(in)) run(f, fs::path(dn.out) / f.filename());
            } else {
                run(in, dn.out);
            }
        } else if (*eval) {
            Checkpoint ck = load_checkpoint(ev_ckpt);
            const auto pairs = select(load_pair_dataset(ev_data), ev_split, holdout_of(ck));
            const MetricsReport report = evaluate(pairs, ck.model, overlap_of(ck, ev_overlap));
            fs::create_directories(ev.out);
            write_metrics_csv(report, fs::path(ev.out) / "metrics.csv");
            write_metrics_json(report, fs::path(ev.out) / "metrics.json");
            std::cout << "psnr " << report.mean.psnr_noisy << " -> " << report.mean.psnr_denoised << ", ssim "
                      << report.mean.ssim_noisy << " -> " << report.mean.ssim_denoised << ", uqi "
                      << report.mean.uqi_noisy << " -> " << report.mean.uqi_denoised << '\n';
        } else if (*viz) {
            Checkpoint ck = load_checkpoint(vz_ckpt);
            const auto pairs = select(load_pair_dataset(vz_data), vz_split, holdout_of(ck));
            const auto proj = project_latents(collect_latents(ck.model, pairs, overlap_of(ck, std::nullopt)));
            if (fs::path(vz.out).has_parent_path()) fs::create_directories(fs::path(vz.out).parent_path());
            write_latent_csv(proj, vz.out);
            for (int s = 0; s < kSubspaces; ++s)
                std::cout << kSubspaceLabels[s] << " centroid distance " << proj[s].centroid_distance() << '\n';
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
