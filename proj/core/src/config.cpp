#include "calvid/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "calvid/errors.hpp"

using nlohmann::json;

namespace calvid {

void RunConfig::sync_geometry() {
    model.frames = world.frames;
    model.lat_h = world.height / codec.patch;
    model.lat_w = world.width / codec.patch;
    model.latent_channels = codec.latent_channels;
    model.action_dim = world.action_dim;
    probe.frames = world.frames;
    probe.lat_h = model.lat_h;
    probe.lat_w = model.lat_w;
    probe.latent_channels = codec.latent_channels;
    probe.cond_width = model.width;
    probe.bins = ThresholdSet::adaptive().size() + 1;
}

void RunConfig::validate() const {
    world.validate();
    if (world.height % codec.patch != 0 || world.width % codec.patch != 0)
        throw ConfigError("arena extents must be divisible by the codec patch factor");
    if (train_episodes < 1 || test_episodes < 1) throw ConfigError("bad episode counts");
    if (eval_threshold_count < 1 || !(eval_threshold_lo > 0.0) ||
        !(eval_threshold_hi > eval_threshold_lo))
        throw ConfigError("bad evaluation threshold range");
    if (reliability_bins < 1) throw ConfigError("bad reliability bin count");
    if (rollout_episodes < 1 || correlation_samples < 10)
        throw ConfigError("bad rollout/correlation sizes");
    train.validate(probe.head);
}

namespace {

json to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["world"] = {{"height", c.world.height},
                  {"width", c.world.width},
                  {"frames", c.world.frames},
                  {"action_dim", c.world.action_dim},
                  {"min_objects", c.world.min_objects},
                  {"max_objects", c.world.max_objects},
                  {"clutter_min_objects", c.world.clutter_min_objects},
                  {"clutter_max_objects", c.world.clutter_max_objects},
                  {"occluder_prob", c.world.occluder_prob},
                  {"deformable_prob", c.world.deformable_prob},
                  {"max_speed", c.world.max_speed},
                  {"tint_min", c.world.tint_min},
                  {"tint_max", c.world.tint_max}};
    j["dataset"] = {{"train_episodes", c.train_episodes},
                    {"test_episodes", c.test_episodes},
                    {"ood_episodes_per_axis", c.ood_episodes_per_axis}};
    j["codec"] = {{"patch", c.codec.patch},
                  {"latent_channels", c.codec.latent_channels},
                  {"hidden", c.codec.hidden},
                  {"epochs", c.codec_epochs},
                  {"lr", c.codec_lr},
                  {"max_frames", c.codec_max_frames}};
    j["model"] = {{"blocks", c.model.blocks},
                  {"heads", c.model.heads},
                  {"width", c.model.width},
                  {"mlp_mult", c.model.mlp_mult},
                  {"schedule_steps", c.model.schedule_steps},
                  {"beta_start", c.model.beta_start},
                  {"beta_end", c.model.beta_end},
                  {"reverse_steps", c.model.reverse_steps}};
    j["probe"] = {{"head", head_kind_name(c.probe.head)},
                  {"blocks", c.probe.blocks},
                  {"heads", c.probe.heads},
                  {"width", c.probe.width},
                  {"mlp_mult", c.probe.mlp_mult},
                  {"fsc_eps_v", c.probe.fsc_eps_v}};
    j["train"] = {{"steps", c.train.steps},
                  {"batch_episodes", c.train.batch_episodes},
                  {"lr", c.train.lr},
                  {"clip_norm", c.train.clip_norm},
                  {"score", score_kind_name(c.train.score)},
                  {"diffusion_forcing", c.train.diffusion_forcing},
                  {"stop_gradient", c.train.stop_gradient},
                  {"csbc_draws", c.train.csbc_draws},
                  {"log_every", c.train.log_every}};
    j["eval"] = {{"threshold_count", c.eval_threshold_count},
                 {"threshold_lo", c.eval_threshold_lo},
                 {"threshold_hi", c.eval_threshold_hi},
                 {"reliability_bins", c.reliability_bins},
                 {"timestep_draws", c.timestep_draws},
                 {"rollout_episodes", c.rollout_episodes},
                 {"correlation_samples", c.correlation_samples},
                 {"heatmap_eps_v", c.heatmap_eps_v},
                 {"heatmap_opacity", c.heatmap_opacity}};
    return j;
}

RunConfig from_json(const json& j) {
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("world")) {
        const json& w = j["world"];
        c.world.height = w.value("height", c.world.height);
        c.world.width = w.value("width", c.world.width);
        c.world.frames = w.value("frames", c.world.frames);
        c.world.action_dim = w.value("action_dim", c.world.action_dim);
        c.world.min_objects = w.value("min_objects", c.world.min_objects);
        c.world.max_objects = w.value("max_objects", c.world.max_objects);
        c.world.clutter_min_objects = w.value("clutter_min_objects", c.world.clutter_min_objects);
        c.world.clutter_max_objects = w.value("clutter_max_objects", c.world.clutter_max_objects);
        c.world.occluder_prob = w.value("occluder_prob", c.world.occluder_prob);
        c.world.deformable_prob = w.value("deformable_prob", c.world.deformable_prob);
        c.world.max_speed = w.value("max_speed", c.world.max_speed);
        c.world.tint_min = w.value("tint_min", c.world.tint_min);
        c.world.tint_max = w.value("tint_max", c.world.tint_max);
    }
    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        c.train_episodes = d.value("train_episodes", c.train_episodes);
        c.test_episodes = d.value("test_episodes", c.test_episodes);
        c.ood_episodes_per_axis = d.value("ood_episodes_per_axis", c.ood_episodes_per_axis);
    }
    if (j.contains("codec")) {
        const json& k = j["codec"];
        c.codec.patch = k.value("patch", c.codec.patch);
        c.codec.latent_channels = k.value("latent_channels", c.codec.latent_channels);
        c.codec.hidden = k.value("hidden", c.codec.hidden);
        c.codec_epochs = k.value("epochs", c.codec_epochs);
        c.codec_lr = k.value("lr", c.codec_lr);
        c.codec_max_frames = k.value("max_frames", c.codec_max_frames);
    }
    if (j.contains("model")) {
        const json& m = j["model"];
        c.model.blocks = m.value("blocks", c.model.blocks);
        c.model.heads = m.value("heads", c.model.heads);
        c.model.width = m.value("width", c.model.width);
        c.model.mlp_mult = m.value("mlp_mult", c.model.mlp_mult);
        c.model.schedule_steps = m.value("schedule_steps", c.model.schedule_steps);
        c.model.beta_start = m.value("beta_start", c.model.beta_start);
        c.model.beta_end = m.value("beta_end", c.model.beta_end);
        c.model.reverse_steps = m.value("reverse_steps", c.model.reverse_steps);
    }
    if (j.contains("probe")) {
        const json& p = j["probe"];
        c.probe.head = head_kind_from_name(p.value("head", "csbc"));
        c.probe.blocks = p.value("blocks", c.probe.blocks);
        c.probe.heads = p.value("heads", c.probe.heads);
        c.probe.width = p.value("width", c.probe.width);
        c.probe.mlp_mult = p.value("mlp_mult", c.probe.mlp_mult);
        c.probe.fsc_eps_v = p.value("fsc_eps_v", c.probe.fsc_eps_v);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        c.train.steps = t.value("steps", c.train.steps);
        c.train.batch_episodes = t.value("batch_episodes", c.train.batch_episodes);
        c.train.lr = t.value("lr", c.train.lr);
        c.train.clip_norm = t.value("clip_norm", c.train.clip_norm);
        c.train.score = score_kind_from_name(t.value("score", "brier"));
        c.train.diffusion_forcing = t.value("diffusion_forcing", c.train.diffusion_forcing);
        c.train.stop_gradient = t.value("stop_gradient", c.train.stop_gradient);
        c.train.csbc_draws = t.value("csbc_draws", c.train.csbc_draws);
        c.train.log_every = t.value("log_every", c.train.log_every);
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        c.eval_threshold_count = e.value("threshold_count", c.eval_threshold_count);
        c.eval_threshold_lo = e.value("threshold_lo", c.eval_threshold_lo);
        c.eval_threshold_hi = e.value("threshold_hi", c.eval_threshold_hi);
        c.reliability_bins = e.value("reliability_bins", c.reliability_bins);
        c.timestep_draws = e.value("timestep_draws", c.timestep_draws);
        c.rollout_episodes = e.value("rollout_episodes", c.rollout_episodes);
        c.correlation_samples = e.value("correlation_samples", c.correlation_samples);
        c.heatmap_eps_v = e.value("heatmap_eps_v", c.heatmap_eps_v);
        c.heatmap_opacity = e.value("heatmap_opacity", c.heatmap_opacity);
    }
    c.train.seed = c.seed;
    c.sync_geometry();
    return c;
}

}  // namespace

RunConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        return from_json(j);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config field: ") + e.what());
    }
}

std::string config_to_json_text(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return config_from_json_text(ss.str());
}

void save_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw MissingArtifactError("cannot write config copy: " + path);
    os << config_to_json_text(cfg);
}

}  // namespace calvid
