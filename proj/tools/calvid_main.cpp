// calvid: synthetic-world lab for calibrated latent video world models.
// Subcommands: gen-data, train-codec, train, eval, ood, ablate, render.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "calvid/config.hpp"
#include "calvid/errors.hpp"
#include "calvid/pipelines.hpp"

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    bool overwrite = false;
};

calvid::RunConfig resolve_config(const GlobalOpts& g) {
    calvid::RunConfig cfg;
    if (!g.config_path.empty()) cfg = calvid::load_config(g.config_path);
    if (g.seed_set) {
        cfg.seed = g.seed;
        cfg.train.seed = g.seed;
    }
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    cfg.sync_geometry();
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"calibrated latent video world-model lab"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--out", g.out_dir, "output directory (overrides config)");
    app.add_option("--seed", g.seed, "master seed (overrides config)")
        ->each([&](const std::string&) { g.seed_set = true; });
    app.add_flag("--overwrite", g.overwrite, "replace existing outputs");

    auto* gen = app.add_subcommand("gen-data", "generate the nominal and OOD datasets");
    auto* train_codec = app.add_subcommand("train-codec", "train the pixel<->latent codec");
    auto* train = app.add_subcommand("train", "jointly train the world model and probe");
    auto* eval = app.add_subcommand("eval", "calibration evaluation on the test split");
    bool oracle = false;
    eval->add_flag("--oracle", oracle, "use the stratified-counting oracle probe");
    auto* ood = app.add_subcommand("ood", "evaluate the five OOD axes");
    auto* ablate = app.add_subcommand("ablate", "train/evaluate an ablation pair");
    std::string which = "score_rule";
    ablate->add_option("--which", which, "score_rule | diffusion_forcing | stop_gradient");
    bool no_reuse = false;
    ablate->add_flag("--no-reuse", no_reuse, "retrain even when a variant matches the main run");
    auto* render = app.add_subcommand("render", "write heatmap/error PPM frames for one episode");
    int episode = 0;
    render->add_option("--episode", episode, "test-episode index");

    CLI11_PARSE(app, argc, argv);

    try {
        calvid::RunConfig cfg = resolve_config(g);
        if (gen->parsed()) {
            calvid::pipeline_gen_data(cfg, g.overwrite);
            std::printf("datasets written under %s/data\n", cfg.out_dir.c_str());
        } else if (train_codec->parsed()) {
            calvid::CodecParams codec = calvid::pipeline_train_codec(cfg);
            std::printf("codec trained: held-out PSNR %.2f dB\n", codec.heldout_psnr);
        } else if (train->parsed()) {
            calvid::pipeline_train(cfg);
            std::printf("checkpoints written under %s/ckpt\n", cfg.out_dir.c_str());
        } else if (eval->parsed()) {
            calvid::EvalResult r = calvid::pipeline_eval(
                cfg, oracle ? calvid::ProbeMode::kOracle : calvid::ProbeMode::kLearned);
            std::printf("pooled ECE %.4f MCE %.4f over %lld pairs\n", r.aggregate.ece,
                        r.aggregate.mce, static_cast<long long>(r.aggregate.n));
            if (r.has_correlation)
                std::printf("confidence/error correlation %.4f (p=%.3g, %d outliers removed)\n",
                            r.correlation.coefficient, r.correlation.p_value,
                            r.correlation.outliers);
        } else if (ood->parsed()) {
            calvid::OodEvalResult r = calvid::pipeline_eval_ood(cfg);
            std::printf("id mean confidence %.4f, ECE %.4f\n", r.id.mean_confidence,
                        r.pooled_id_ece);
            for (const auto& e : r.per_axis)
                std::printf("%-14s mean confidence %.4f, ECE %.4f\n", e.dataset_tag.c_str(),
                            e.mean_confidence, e.aggregate.ece);
            std::printf("pooled OOD ECE %.4f\n", r.pooled_ood_ece);
        } else if (ablate->parsed()) {
            calvid::AblationResult r = calvid::pipeline_ablate(cfg, which, !no_reuse);
            std::printf("%s: %s ECE %.4f vs %s ECE %.4f (|delta| %.4f)\n", r.which.c_str(),
                        r.label_a.c_str(), r.a.aggregate.ece, r.label_b.c_str(),
                        r.b.aggregate.ece, r.delta_ece);
        } else if (render->parsed()) {
            calvid::pipeline_render(cfg, episode);
            std::printf("frames written under %s/render\n", cfg.out_dir.c_str());
        }
        return 0;
    } catch (const calvid::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const calvid::MissingArtifactError& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return 3;
    } catch (const calvid::DivergenceError& e) {
        std::fprintf(stderr, "numeric divergence: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
