#include "calvid/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "calvid/blob.hpp"
#include "calvid/errors.hpp"

using nlohmann::json;

namespace calvid {

namespace {

template <typename Visitable>
json write_weights(const std::string& prefix, Visitable& model) {
    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw MissingArtifactError("cannot create checkpoint blob: " + prefix + ".bin");
    json index = json::array();
    int64_t offset = 0;
    model.visit([&](const std::string& name, Tensor& t) {
        index.push_back(json{{"name", name}, {"offset", offset}});
        blob::write(bin, t);
        offset += blob::byte_size(t.shape());
    });
    return index;
}

template <typename Visitable>
void read_weights(const std::string& prefix, const json& index, Visitable& model) {
    std::ifstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw MissingArtifactError("missing checkpoint blob: " + prefix + ".bin");
    std::unordered_map<std::string, int64_t> offsets;
    for (const auto& e : index) offsets[e.at("name").get<std::string>()] = e.at("offset");
    model.visit([&](const std::string& name, Tensor& t) {
        auto it = offsets.find(name);
        if (it == offsets.end())
            throw MissingArtifactError("checkpoint is missing tensor: " + name);
        bin.seekg(it->second);
        Tensor loaded = blob::read(bin);
        if (!loaded.same_shape(t))
            throw ShapeError("checkpoint tensor " + name + " has shape " +
                             shape_str(loaded.shape()) + ", expected " + shape_str(t.shape()));
        t = std::move(loaded);
    });
}

json load_header(const std::string& prefix, const std::string& expected_kind) {
    std::ifstream is(prefix + ".json");
    if (!is) throw MissingArtifactError("missing checkpoint header: " + prefix + ".json");
    json j;
    is >> j;
    if (j.value("kind", "") != expected_kind)
        throw MissingArtifactError("checkpoint " + prefix + " is a '" + j.value("kind", "?") +
                                   "', expected '" + expected_kind + "'");
    return j;
}

void write_header(const std::string& prefix, const json& j) {
    std::ofstream os(prefix + ".json");
    if (!os) throw MissingArtifactError("cannot write checkpoint header: " + prefix + ".json");
    os << j.dump(2) << "\n";
}

}  // namespace

void save_codec(const std::string& prefix, const CodecParams& codec) {
    auto& m = const_cast<CodecParams&>(codec);
    json j;
    j["kind"] = "codec";
    j["format_version"] = 1;
    j["seed"] = codec.seed;
    j["arch"] = {{"patch", codec.cfg.patch},
                 {"latent_channels", codec.cfg.latent_channels},
                 {"hidden", codec.cfg.hidden}};
    j["heldout_psnr"] = codec.heldout_psnr;
    j["heldout_max_abs_err"] = codec.heldout_max_abs_err;
    j["psnr_floor"] = codec.psnr_floor;
    j["epoch_losses"] = codec.epoch_losses;
    j["tensors"] = write_weights(prefix, m);
    write_header(prefix, j);
}

CodecParams load_codec(const std::string& prefix) {
    json j = load_header(prefix, "codec");
    CodecConfig cfg;
    cfg.patch = j["arch"].value("patch", cfg.patch);
    cfg.latent_channels = j["arch"].value("latent_channels", cfg.latent_channels);
    cfg.hidden = j["arch"].value("hidden", cfg.hidden);
    CodecParams codec = CodecParams::create(cfg, j.value("seed", 0ull));
    codec.heldout_psnr = j.value("heldout_psnr", 0.0);
    codec.heldout_max_abs_err = j.value("heldout_max_abs_err", 1.0);
    codec.psnr_floor = j.value("psnr_floor", codec.psnr_floor);
    codec.epoch_losses = j.value("epoch_losses", std::vector<double>{});
    read_weights(prefix, j.at("tensors"), codec);
    return codec;
}

void save_denoiser(const std::string& prefix, const Denoiser& model) {
    auto& m = const_cast<Denoiser&>(model);
    json j;
    j["kind"] = "denoiser";
    j["format_version"] = 1;
    j["seed"] = model.seed;
    j["train_steps"] = model.train_steps;
    j["latent_scale"] = model.latent_scale;
    j["latent_shift"] = model.latent_shift;
    j["arch"] = {{"frames", model.cfg.frames},
                 {"lat_h", model.cfg.lat_h},
                 {"lat_w", model.cfg.lat_w},
                 {"latent_channels", model.cfg.latent_channels},
                 {"action_dim", model.cfg.action_dim},
                 {"blocks", model.cfg.blocks},
                 {"heads", model.cfg.heads},
                 {"width", model.cfg.width},
                 {"mlp_mult", model.cfg.mlp_mult}};
    j["schedule"] = {{"steps", model.cfg.schedule_steps},
                     {"beta_start", model.cfg.beta_start},
                     {"beta_end", model.cfg.beta_end},
                     {"reverse_steps", model.cfg.reverse_steps}};
    j["tensors"] = write_weights(prefix, m);
    write_header(prefix, j);
}

Denoiser load_denoiser(const std::string& prefix) {
    json j = load_header(prefix, "denoiser");
    DenoiserConfig cfg;
    const json& a = j.at("arch");
    cfg.frames = a.value("frames", cfg.frames);
    cfg.lat_h = a.value("lat_h", cfg.lat_h);
    cfg.lat_w = a.value("lat_w", cfg.lat_w);
    cfg.latent_channels = a.value("latent_channels", cfg.latent_channels);
    cfg.action_dim = a.value("action_dim", cfg.action_dim);
    cfg.blocks = a.value("blocks", cfg.blocks);
    cfg.heads = a.value("heads", cfg.heads);
    cfg.width = a.value("width", cfg.width);
    cfg.mlp_mult = a.value("mlp_mult", cfg.mlp_mult);
    const json& s = j.at("schedule");
    cfg.schedule_steps = s.value("steps", cfg.schedule_steps);
    cfg.beta_start = s.value("beta_start", cfg.beta_start);
    cfg.beta_end = s.value("beta_end", cfg.beta_end);
    cfg.reverse_steps = s.value("reverse_steps", cfg.reverse_steps);
    Denoiser model = Denoiser::create(cfg, j.value("seed", 0ull));
    model.train_steps = j.value("train_steps", 0ll);
    model.latent_scale = j.value("latent_scale", 1.0f);
    model.latent_shift = j.value("latent_shift", 0.0f);
    read_weights(prefix, j.at("tensors"), model);
    return model;
}

void save_probe(const std::string& prefix, const ProbeHead& head) {
    auto& m = const_cast<ProbeHead&>(head);
    json j;
    j["kind"] = "probe";
    j["format_version"] = 1;
    j["seed"] = head.seed;
    j["arch"] = {{"head", head_kind_name(head.cfg.head)},
                 {"frames", head.cfg.frames},
                 {"lat_h", head.cfg.lat_h},
                 {"lat_w", head.cfg.lat_w},
                 {"latent_channels", head.cfg.latent_channels},
                 {"cond_width", head.cfg.cond_width},
                 {"blocks", head.cfg.blocks},
                 {"heads", head.cfg.heads},
                 {"width", head.cfg.width},
                 {"mlp_mult", head.cfg.mlp_mult},
                 {"bins", head.cfg.bins},
                 {"fsc_eps_v", head.cfg.fsc_eps_v}};
    j["tensors"] = write_weights(prefix, m);
    write_header(prefix, j);
}

ProbeHead load_probe(const std::string& prefix) {
    json j = load_header(prefix, "probe");
    ProbeConfig cfg;
    const json& a = j.at("arch");
    cfg.head = head_kind_from_name(a.value("head", "csbc"));
    cfg.frames = a.value("frames", cfg.frames);
    cfg.lat_h = a.value("lat_h", cfg.lat_h);
    cfg.lat_w = a.value("lat_w", cfg.lat_w);
    cfg.latent_channels = a.value("latent_channels", cfg.latent_channels);
    cfg.cond_width = a.value("cond_width", cfg.cond_width);
    cfg.blocks = a.value("blocks", cfg.blocks);
    cfg.heads = a.value("heads", cfg.heads);
    cfg.width = a.value("width", cfg.width);
    cfg.mlp_mult = a.value("mlp_mult", cfg.mlp_mult);
    cfg.bins = a.value("bins", cfg.bins);
    cfg.fsc_eps_v = a.value("fsc_eps_v", cfg.fsc_eps_v);
    ProbeHead head = ProbeHead::create(cfg, j.value("seed", 0ull));
    read_weights(prefix, j.at("tensors"), head);
    return head;
}

}  // namespace calvid
