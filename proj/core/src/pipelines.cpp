#include "calvid/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "calvid/diffusion.hpp"
#include "calvid/errors.hpp"
#include "calvid/render.hpp"
#include "calvid/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace calvid {

std::string nominal_data_dir(const RunConfig& cfg) { return cfg.out_dir + "/data/nominal"; }

std::string ood_data_dir(const RunConfig& cfg, OodAxis axis) {
    return cfg.out_dir + "/data/ood_" + ood_axis_name(axis);
}

std::string checkpoint_prefix(const RunConfig& cfg, const std::string& kind) {
    return cfg.out_dir + "/ckpt/" + kind;
}

namespace {

Tensor normalize_latent(const Tensor& lat, const Denoiser& m) {
    Tensor out(lat.shape());
    const float shift = m.latent_shift;
    const float inv = 1.0f / m.latent_scale;
    for (int64_t i = 0; i < lat.size(); ++i) out[i] = (lat[i] - shift) * inv;
    return out;
}

Tensor denormalize_latent(const Tensor& lat, const Denoiser& m) {
    Tensor out(lat.shape());
    for (int64_t i = 0; i < lat.size(); ++i) out[i] = lat[i] * m.latent_scale + m.latent_shift;
    return out;
}

std::vector<double> eval_thresholds(const RunConfig& cfg, const ProbeConfig& probe) {
    switch (probe.head) {
        case HeadKind::kFsc: return {probe.fsc_eps_v};
        case HeadKind::kCsBc:
            return ThresholdSet::linear(cfg.eval_threshold_count, cfg.eval_threshold_lo,
                                        cfg.eval_threshold_hi)
                .values;
        case HeadKind::kMcc: return ThresholdSet::adaptive().values;
    }
    return {probe.fsc_eps_v};
}

void accumulate_pair(ReliabilityReport& r, float q, uint8_t y) {
    const int m = std::min(r.num_bins - 1, static_cast<int>(q * r.num_bins));
    auto& b = r.bins[static_cast<size_t>(m)];
    b.sum_conf += q;
    b.sum_acc += y;
    b.count += 1;
}

ReliabilityReport fresh_report(const RunConfig& cfg, const ProbeConfig& probe,
                               const std::string& tag, double eps_v) {
    ReliabilityReport r;
    r.num_bins = cfg.reliability_bins;
    r.bins.assign(static_cast<size_t>(r.num_bins), {});
    r.head = head_kind_name(probe.head);
    r.dataset_tag = tag;
    r.eps_v = eps_v;
    return r;
}

/// Per-threshold confidence maps for one prediction. FSC and MCC need a
/// single probe pass; CS-BC conditions on each threshold.
std::vector<Tensor> confidence_per_threshold(const ProbeHead& probe, const Tensor& z,
                                             const Tensor& cond,
                                             const std::vector<double>& thresholds,
                                             const BinStructure& bins) {
    std::vector<Tensor> out;
    out.reserve(thresholds.size());
    switch (probe.cfg.head) {
        case HeadKind::kFsc: {
            ConfidenceMap map = probe_forward(probe, z, cond, std::nullopt);
            for (size_t i = 0; i < thresholds.size(); ++i) out.push_back(map.values);
            break;
        }
        case HeadKind::kCsBc: {
            for (double eps : thresholds)
                out.push_back(probe_forward(probe, z, cond, eps).values);
            break;
        }
        case HeadKind::kMcc: {
            ConfidenceMap map = probe_forward(probe, z, cond, std::nullopt);
            for (double eps : thresholds)
                out.push_back(mcc_cumulative_confidence(map, eps, bins));
            break;
        }
    }
    return out;
}

json report_to_json(const ReliabilityReport& r) {
    json bins = json::array();
    for (int m = 0; m < r.num_bins; ++m)
        bins.push_back(json{{"conf", r.conf(m)},
                            {"acc", r.acc(m)},
                            {"count", r.bins[static_cast<size_t>(m)].count}});
    return json{{"head", r.head},     {"dataset", r.dataset_tag}, {"eps_v", r.eps_v},
                {"num_bins", r.num_bins}, {"n", r.n},             {"ece", r.ece},
                {"mce", r.mce},       {"bins", bins}};
}

}  // namespace

void pipeline_gen_data(const RunConfig& cfg, bool overwrite) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    save_config(cfg, cfg.out_dir + "/config.json");

    const int n = cfg.train_episodes + cfg.test_episodes;
    const double fraction = static_cast<double>(cfg.train_episodes) / n;
    generate_dataset(cfg.world, n, cfg.seed, nominal_data_dir(cfg), overwrite, fraction);

    uint64_t axis_salt = 0x0b5ec0a17dull;
    for (OodAxis axis : all_ood_axes()) {
        WorldConfig wc = cfg.world;
        wc.ood_axis = axis;
        // distinct seed stream per axis; every episode is an eval episode
        generate_dataset(wc, cfg.ood_episodes_per_axis, cfg.seed ^ (++axis_salt),
                         ood_data_dir(cfg, axis), overwrite, 0.0);
    }
}

CodecParams pipeline_train_codec(const RunConfig& cfg) {
    cfg.validate();
    const std::string data_dir = nominal_data_dir(cfg);
    DatasetManifest manifest = load_manifest(data_dir);

    std::vector<Tensor> train_frames, heldout_frames;
    int64_t collected = 0;
    for (int idx : manifest.indices("train")) {
        if (collected >= cfg.codec_max_frames) break;
        Episode ep = load_episode(data_dir, manifest, idx);
        train_frames.push_back(ep.frames);
        collected += ep.frames.dim(0);
    }
    int64_t held = 0;
    for (int idx : manifest.indices("test")) {
        if (held >= 800) break;
        Episode ep = load_episode(data_dir, manifest, idx);
        heldout_frames.push_back(ep.frames);
        held += ep.frames.dim(0);
    }

    CodecTrainOptions opts;
    opts.epochs = cfg.codec_epochs;
    opts.lr = cfg.codec_lr;
    CodecParams codec = train_codec(train_frames, heldout_frames, cfg.seed, cfg.codec, opts);

    fs::create_directories(cfg.out_dir + "/ckpt");
    save_codec(checkpoint_prefix(cfg, "codec"), codec);
    save_config(cfg, cfg.out_dir + "/config.json");
    return codec;
}

TrainedModels pipeline_train(const RunConfig& cfg, const std::string& run_dir_arg) {
    cfg.validate();
    const std::string run_dir = run_dir_arg.empty() ? cfg.out_dir : run_dir_arg;
    const std::string data_dir = nominal_data_dir(cfg);
    DatasetManifest manifest = load_manifest(data_dir);

    CodecParams codec = load_codec(checkpoint_prefix(cfg, "codec"));

    Denoiser model = Denoiser::create(cfg.model, cfg.seed);
    ProbeHead probe = ProbeHead::create(cfg.probe, cfg.seed + 1);

    // encode the train split and record the normalization
    std::vector<Tensor> latents, actions;
    double sum = 0.0, sum_sq = 0.0;
    int64_t count = 0;
    for (int idx : manifest.indices("train")) {
        Episode ep = load_episode(data_dir, manifest, idx);
        Tensor lat = encode(codec, ep.frames);
        for (int64_t i = 0; i < lat.size(); ++i) {
            sum += lat[i];
            sum_sq += static_cast<double>(lat[i]) * lat[i];
        }
        count += lat.size();
        latents.push_back(std::move(lat));
        actions.push_back(ep.actions);
    }
    if (latents.empty()) throw MissingArtifactError("empty train split in " + data_dir);
    const double mean = sum / count;
    const double var = std::max(1e-12, sum_sq / count - mean * mean);
    model.latent_shift = static_cast<float>(mean);
    model.latent_scale = static_cast<float>(std::sqrt(var));
    for (Tensor& lat : latents) lat = normalize_latent(lat, model);

    JointTrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    TrainResult result = train_joint(model, probe, latents, actions, tc);

    fs::create_directories(run_dir + "/ckpt");
    save_denoiser(run_dir + "/ckpt/model", model);
    save_probe(run_dir + "/ckpt/probe", probe);
    if (run_dir != cfg.out_dir) {
        // ablation variants keep their codec reference local for provenance
        save_codec(run_dir + "/ckpt/codec", codec);
    }
    write_train_log_csv(run_dir + "/train_log.csv", result.log);
    RunConfig stored = cfg;
    stored.out_dir = run_dir;
    fs::create_directories(run_dir);
    save_config(stored, run_dir + "/config.json");
    return TrainedModels{std::move(codec), std::move(model), std::move(probe)};
}

TrainedModels load_models(const RunConfig& cfg) {
    TrainedModels m{load_codec(checkpoint_prefix(cfg, "codec")),
                    load_denoiser(checkpoint_prefix(cfg, "model")),
                    load_probe(checkpoint_prefix(cfg, "probe"))};
    return m;
}

EvalResult evaluate_dataset(const RunConfig& cfg, const TrainedModels& models,
                            const std::string& data_dir, const std::string& tag,
                            ProbeMode mode, bool with_rollouts) {
    const Denoiser& model = models.model;
    const ProbeHead& probe = models.probe;
    DatasetManifest manifest = load_manifest(data_dir);
    std::vector<int> test_idx = manifest.indices("test");
    if (test_idx.empty()) throw MissingArtifactError("empty test split in " + data_dir);

    EvalResult res;
    res.dataset_tag = tag;
    res.thresholds = eval_thresholds(cfg, probe.cfg);
    const BinStructure bins = BinStructure::from_thresholds(ThresholdSet::adaptive());
    const size_t n_thr = res.thresholds.size();
    for (size_t i = 0; i < n_thr; ++i)
        res.per_threshold.push_back(fresh_report(cfg, probe.cfg, tag, res.thresholds[i]));

    // the threshold closest to the heatmap scale drives mean confidence
    size_t heat_idx = 0;
    for (size_t i = 0; i < n_thr; ++i)
        if (std::abs(res.thresholds[i] - cfg.heatmap_eps_v) <
            std::abs(res.thresholds[heat_idx] - cfg.heatmap_eps_v))
            heat_idx = i;

    const auto& mc = model.cfg;
    const int64_t S = mc.tokens_per_frame();
    const int64_t tail_elems = (mc.tokens() - S) * mc.latent_channels;

    // oracle mode collects (threshold, timestep, outcome) records first
    struct OracleRec {
        uint16_t stratum;
        uint8_t y;
    };
    std::vector<OracleRec> oracle_records;

    double conf_sum = 0.0, conf_lo_sum = 0.0, conf_hi_sum = 0.0;
    int64_t conf_count = 0;

    const TimestepMode ts_mode = cfg.train.diffusion_forcing ? TimestepMode::kDiffusionForcing
                                                             : TimestepMode::kShared;

    for (int idx : test_idx) {
        Episode ep = load_episode(data_dir, manifest, idx);
        Tensor x0 = normalize_latent(encode(models.codec, ep.frames), model);
        for (int draw = 0; draw < cfg.timestep_draws; ++draw) {
            Rng rng = Rng(ep.seed, 61).fork(static_cast<uint64_t>(draw));
            std::vector<int> t =
                sample_timesteps(ts_mode, mc.frames, mc.schedule_steps, rng);
            t[0] = 0;
            Tensor noise = rng.normal_tensor(x0.shape());
            Tensor x_t = forward_noise(x0, t, noise, model.sched);
            VelocityPrediction pred = predict_velocity(model, x_t, ep.actions, t);
            Tensor v_star = velocity_target(x0, noise, t, model.sched);
            Tensor d = distance(pred.v_hat, v_star);

            std::vector<Tensor> q_maps;
            if (mode == ProbeMode::kLearned)
                q_maps = confidence_per_threshold(probe, pred.z, pred.cond, res.thresholds, bins);

            for (size_t ti = 0; ti < n_thr; ++ti) {
                const double eps_v = res.thresholds[ti];
                const float eps_f = static_cast<float>(eps_v);
                for (int64_t i = 0; i < tail_elems; ++i) {
                    const int64_t elem = S * mc.latent_channels + i;
                    const uint8_t y = (d[elem] <= eps_f) ? 1 : 0;
                    if (mode == ProbeMode::kLearned) {
                        const float q = std::clamp(q_maps[ti][elem], 0.0f, 1.0f);
                        accumulate_pair(res.per_threshold[ti], q, y);
                        if (ti == heat_idx) {
                            conf_sum += q;
                            ++conf_count;
                        }
                        if (ti == 0) conf_lo_sum += q;
                        if (ti + 1 == n_thr) conf_hi_sum += q;
                    } else {
                        const int frame = static_cast<int>(elem / (S * mc.latent_channels));
                        oracle_records.push_back(OracleRec{
                            static_cast<uint16_t>(ti * 256 + t[static_cast<size_t>(frame)]),
                            y});
                    }
                }
            }
        }
    }

    if (mode == ProbeMode::kOracle) {
        // plug-in confidence: empirical accuracy per (threshold, timestep)
        std::vector<int64_t> cnt(n_thr * 256, 0), acc(n_thr * 256, 0);
        for (const auto& r : oracle_records) {
            cnt[r.stratum] += 1;
            acc[r.stratum] += r.y;
        }
        for (const auto& r : oracle_records) {
            const float q = static_cast<float>(static_cast<double>(acc[r.stratum]) /
                                               static_cast<double>(cnt[r.stratum]));
            const size_t ti = r.stratum / 256;
            accumulate_pair(res.per_threshold[ti], q, r.y);
            if (ti == heat_idx) {
                conf_sum += q;
                ++conf_count;
            }
            if (ti == 0) conf_lo_sum += q;
            if (ti + 1 == n_thr) conf_hi_sum += q;
        }
    }

    double ece_sum = 0.0, mce_sum = 0.0;
    for (auto& r : res.per_threshold) {
        r.recompute();
        ece_sum += r.ece;
        mce_sum += r.mce;
        res.pair_count += r.n;
    }
    res.mean_ece = ece_sum / static_cast<double>(n_thr);
    res.mean_mce = mce_sum / static_cast<double>(n_thr);
    res.aggregate = aggregate_reports(res.per_threshold);
    res.aggregate.head = head_kind_name(probe.cfg.head);
    res.aggregate.dataset_tag = tag;
    res.mean_confidence = conf_count ? conf_sum / static_cast<double>(conf_count) : 0.0;
    res.mean_conf_low_thr = conf_count ? conf_lo_sum / static_cast<double>(conf_count) : 0.0;
    res.mean_conf_high_thr = conf_count ? conf_hi_sum / static_cast<double>(conf_count) : 0.0;

    if (with_rollouts && mode == ProbeMode::kLearned) {
        const int rollouts = std::min<int>(cfg.rollout_episodes, static_cast<int>(test_idx.size()));
        const int64_t total = static_cast<int64_t>(rollouts) * tail_elems;
        const int64_t stride = std::max<int64_t>(1, total / cfg.correlation_samples);
        std::vector<double> xs, ys;
        int64_t counter = 0;
        for (int r = 0; r < rollouts; ++r) {
            Episode ep = load_episode(data_dir, manifest, test_idx[static_cast<size_t>(r)]);
            Tensor x_star = normalize_latent(encode(models.codec, ep.frames), model);
            Tensor first = Tensor({mc.lat_h, mc.lat_w, mc.latent_channels});
            std::copy(x_star.data(), x_star.data() + first.size(), first.data());
            SampleResult roll = sample(model, first, ep.actions, mc.reverse_steps,
                                       Rng(ep.seed, 62).next_u64());
            std::optional<double> heat_eps;
            if (probe.cfg.head == HeadKind::kCsBc) heat_eps = res.thresholds[heat_idx];
            Tensor q;
            if (probe.cfg.head == HeadKind::kMcc) {
                ConfidenceMap map =
                    probe_forward(probe, roll.z_final, roll.cond_final, std::nullopt);
                q = mcc_cumulative_confidence(map, res.thresholds[heat_idx], bins);
            } else {
                q = probe_forward(probe, roll.z_final, roll.cond_final, heat_eps).values;
            }
            for (int64_t i = 0; i < tail_elems; ++i, ++counter) {
                if (counter % stride != 0) continue;
                const int64_t elem = S * mc.latent_channels + i;
                xs.push_back(q[elem]);
                ys.push_back(std::abs(roll.x_hat[elem] - x_star[elem]));
            }
        }
        Rng corr_rng(cfg.seed, 63);
        res.correlation = shepherds_pi(xs, ys, 1000, corr_rng);
        res.has_correlation = true;
    }
    return res;
}

void write_eval_outputs(const RunConfig& cfg, const EvalResult& result,
                        const std::string& subdir) {
    const std::string dir = cfg.out_dir + "/" + subdir;
    fs::create_directories(dir);
    for (size_t i = 0; i < result.per_threshold.size(); ++i) {
        std::ofstream os(dir + "/report_thr" + std::to_string(i) + ".json");
        os << report_to_json(result.per_threshold[i]).dump(2) << "\n";
    }
    {
        std::ofstream os(dir + "/aggregate.json");
        json j = report_to_json(result.aggregate);
        j["mean_ece"] = result.mean_ece;
        j["mean_mce"] = result.mean_mce;
        j["mean_confidence"] = result.mean_confidence;
        if (result.has_correlation) {
            j["correlation"] = {{"coefficient", result.correlation.coefficient},
                                {"p_value", result.correlation.p_value},
                                {"retained", result.correlation.retained},
                                {"outliers", result.correlation.outliers}};
        }
        os << j.dump(2) << "\n";
    }
    render_reliability_svg(result.aggregate, dir + "/reliability.svg");

    std::ofstream csv(dir + "/summary.csv");
    csv << "model,eps_v,dataset,ece,mce,n,coefficient,p_value\n";
    for (const auto& r : result.per_threshold)
        csv << r.head << "," << r.eps_v << "," << r.dataset_tag << "," << r.ece << "," << r.mce
            << "," << r.n << ",,\n";
    csv << result.aggregate.head << ",aggregate," << result.dataset_tag << ","
        << result.aggregate.ece << "," << result.aggregate.mce << "," << result.aggregate.n << ",";
    if (result.has_correlation)
        csv << result.correlation.coefficient << "," << result.correlation.p_value;
    else
        csv << ",";
    csv << "\n";
    save_config(cfg, dir + "/config.json");
}

EvalResult pipeline_eval(const RunConfig& cfg, ProbeMode mode) {
    cfg.validate();
    TrainedModels models = load_models(cfg);
    EvalResult res = evaluate_dataset(cfg, models, nominal_data_dir(cfg), "id", mode,
                                      mode == ProbeMode::kLearned);
    write_eval_outputs(cfg, res, mode == ProbeMode::kLearned ? "eval" : "eval_oracle");
    return res;
}

OodEvalResult pipeline_eval_ood(const RunConfig& cfg) {
    cfg.validate();
    TrainedModels models = load_models(cfg);
    OodEvalResult out;
    out.id = evaluate_dataset(cfg, models, nominal_data_dir(cfg), "id", ProbeMode::kLearned,
                              false);
    std::vector<ReliabilityReport> ood_aggs;
    for (OodAxis axis : all_ood_axes()) {
        EvalResult r = evaluate_dataset(cfg, models, ood_data_dir(cfg, axis),
                                        ood_axis_name(axis), ProbeMode::kLearned, false);
        ood_aggs.push_back(r.aggregate);
        out.per_axis.push_back(std::move(r));
    }
    out.pooled_ood = aggregate_reports(ood_aggs);
    out.pooled_ood.dataset_tag = "ood_pooled";
    out.pooled_ood_ece = out.pooled_ood.ece;
    out.pooled_id_ece = out.id.aggregate.ece;

    const std::string dir = cfg.out_dir + "/ood";
    fs::create_directories(dir);
    std::ofstream csv(dir + "/summary.csv");
    csv << "dataset,mean_confidence,ece,mce,n\n";
    csv << "id," << out.id.mean_confidence << "," << out.id.aggregate.ece << ","
        << out.id.aggregate.mce << "," << out.id.aggregate.n << "\n";
    for (const auto& r : out.per_axis)
        csv << r.dataset_tag << "," << r.mean_confidence << "," << r.aggregate.ece << ","
            << r.aggregate.mce << "," << r.aggregate.n << "\n";
    csv << "ood_pooled,," << out.pooled_ood.ece << "," << out.pooled_ood.mce << ","
        << out.pooled_ood.n << "\n";
    render_reliability_svg(out.pooled_ood, dir + "/reliability_ood.svg");
    save_config(cfg, dir + "/config.json");
    return out;
}

AblationResult pipeline_ablate(const RunConfig& cfg, const std::string& which, bool reuse_main) {
    cfg.validate();
    AblationResult out;
    out.which = which;
    RunConfig a = cfg, b = cfg;
    if (which == "score_rule") {
        if (cfg.probe.head == HeadKind::kMcc)
            throw ConfigError("score_rule ablation needs a binary head (fsc or csbc)");
        a.train.score = ScoreKind::kBrier;
        b.train.score = ScoreKind::kBce;
        out.label_a = "brier";
        out.label_b = "bce";
    } else if (which == "diffusion_forcing") {
        a.train.diffusion_forcing = true;
        b.train.diffusion_forcing = false;
        out.label_a = "forcing_on";
        out.label_b = "forcing_off";
    } else if (which == "stop_gradient") {
        a.train.stop_gradient = true;
        b.train.stop_gradient = false;
        out.label_a = "stopgrad_on";
        out.label_b = "stopgrad_off";
    } else {
        throw ConfigError("unknown ablation: " + which +
                          " (expected score_rule, diffusion_forcing or stop_gradient)");
    }

    auto run_variant = [&](const RunConfig& variant, const std::string& label) -> EvalResult {
        const std::string vdir = cfg.out_dir + "/ablate_" + which + "/" + label;
        TrainedModels models;
        const bool same_as_main =
            reuse_main && config_to_json_text(variant) == config_to_json_text(cfg) &&
            fs::exists(checkpoint_prefix(cfg, "model") + ".json");
        if (same_as_main) {
            models = load_models(cfg);
        } else {
            models = pipeline_train(variant, vdir);
        }
        fs::create_directories(vdir);
        RunConfig stored = variant;
        stored.out_dir = vdir;
        save_config(stored, vdir + "/config.json");
        EvalResult r = evaluate_dataset(cfg, models, nominal_data_dir(cfg), label,
                                        ProbeMode::kLearned, false);
        return r;
    };

    out.a = run_variant(a, out.label_a);
    out.b = run_variant(b, out.label_b);
    out.delta_ece = std::abs(out.a.aggregate.ece - out.b.aggregate.ece);
    out.delta_mce = std::abs(out.a.aggregate.mce - out.b.aggregate.mce);

    const std::string dir = cfg.out_dir + "/ablate_" + which;
    std::ofstream csv(dir + "/summary.csv");
    csv << "variant,ece,mce,mean_ece,mean_mce,n\n";
    csv << out.label_a << "," << out.a.aggregate.ece << "," << out.a.aggregate.mce << ","
        << out.a.mean_ece << "," << out.a.mean_mce << "," << out.a.aggregate.n << "\n";
    csv << out.label_b << "," << out.b.aggregate.ece << "," << out.b.aggregate.mce << ","
        << out.b.mean_ece << "," << out.b.mean_mce << "," << out.b.aggregate.n << "\n";
    csv << "delta," << out.delta_ece << "," << out.delta_mce << ",,,\n";
    return out;
}

void pipeline_render(const RunConfig& cfg, int episode_index) {
    cfg.validate();
    TrainedModels models = load_models(cfg);
    const std::string data_dir = nominal_data_dir(cfg);
    DatasetManifest manifest = load_manifest(data_dir);
    std::vector<int> test_idx = manifest.indices("test");
    if (test_idx.empty()) throw MissingArtifactError("empty test split");
    if (episode_index < 0 || episode_index >= static_cast<int>(test_idx.size()))
        throw MissingArtifactError("render episode index out of range");
    Episode ep = load_episode(data_dir, manifest, test_idx[static_cast<size_t>(episode_index)]);

    const Denoiser& model = models.model;
    const auto& mc = model.cfg;
    LatentColorMap map = build_colormap(models.codec, cfg.world.height, cfg.world.width);

    Tensor x_star = normalize_latent(encode(models.codec, ep.frames), model);
    Tensor first({mc.lat_h, mc.lat_w, mc.latent_channels});
    std::copy(x_star.data(), x_star.data() + first.size(), first.data());
    SampleResult roll =
        sample(model, first, ep.actions, mc.reverse_steps, Rng(ep.seed, 62).next_u64());

    std::optional<double> heat_eps;
    if (models.probe.cfg.head == HeadKind::kCsBc) heat_eps = cfg.heatmap_eps_v;
    Tensor q;
    if (models.probe.cfg.head == HeadKind::kMcc) {
        const BinStructure bins = BinStructure::from_thresholds(ThresholdSet::adaptive());
        // nearest bin edge to the requested heatmap scale
        double edge = bins.edges[1];
        for (double e : bins.edges)
            if (std::isfinite(e) && std::abs(e - cfg.heatmap_eps_v) < std::abs(edge - cfg.heatmap_eps_v))
                edge = e;
        q = mcc_cumulative_confidence(
            probe_forward(models.probe, roll.z_final, roll.cond_final, std::nullopt), edge, bins);
    } else {
        q = probe_forward(models.probe, roll.z_final, roll.cond_final, heat_eps).values;
    }

    Tensor gen_frames = decode(models.codec, denormalize_latent(roll.x_hat, model));
    Tensor conf_frames = render_confidence(q, map, models.codec);
    Tensor err_frames = render_error_map(roll.x_hat, x_star, map, models.codec);

    const std::string dir = cfg.out_dir + "/render";
    fs::create_directories(dir);
    const int64_t fe = static_cast<int64_t>(cfg.world.height) * cfg.world.width * 3;
    auto frame_of = [&](const Tensor& video, int f) {
        Tensor frame({cfg.world.height, cfg.world.width, 3});
        std::copy(video.data() + f * fe, video.data() + (f + 1) * fe, frame.data());
        return frame;
    };
    for (int f = 0; f < cfg.world.frames; ++f) {
        const std::string base = dir + "/" + std::to_string(episode_index) + "_" +
                                 std::to_string(f) + "_";
        Tensor gt = frame_of(ep.frames, f);
        Tensor gen = frame_of(gen_frames, f);
        Tensor conf = frame_of(conf_frames, f);
        write_ppm(base + "gt.ppm", gt);
        write_ppm(base + "gen.ppm", gen);
        write_ppm(base + "conf.ppm", conf);
        write_ppm(base + "comp.ppm", composite(gen, conf, cfg.heatmap_opacity));
        write_ppm(base + "err.ppm", frame_of(err_frames, f));
    }
    save_config(cfg, dir + "/config.json");
}

}  // namespace calvid
