#include "calvid/world.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "calvid/blob.hpp"
#include "calvid/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace calvid {

const char* ood_axis_name(OodAxis axis) {
    switch (axis) {
        case OodAxis::kNone: return "none";
        case OodAxis::kBackground: return "background";
        case OodAxis::kLighting: return "lighting";
        case OodAxis::kClutter: return "clutter";
        case OodAxis::kTargetObject: return "target_object";
        case OodAxis::kEffector: return "effector";
    }
    return "none";
}

OodAxis ood_axis_from_name(const std::string& name) {
    for (OodAxis a : {OodAxis::kNone, OodAxis::kBackground, OodAxis::kLighting, OodAxis::kClutter,
                      OodAxis::kTargetObject, OodAxis::kEffector})
        if (name == ood_axis_name(a)) return a;
    throw ConfigError("unknown ood axis: " + name);
}

std::vector<OodAxis> all_ood_axes() {
    return {OodAxis::kBackground, OodAxis::kLighting, OodAxis::kClutter, OodAxis::kTargetObject,
            OodAxis::kEffector};
}

void WorldConfig::validate() const {
    if (height <= 0 || width <= 0 || channels != 3)
        throw ConfigError("invalid arena: height/width must be positive, channels must be 3");
    if (frames < 2) throw ConfigError("episode length T must be >= 2");
    if (action_dim != 2) throw ConfigError("action dimension must be 2 (planar velocity)");
    if (min_objects < 0 || max_objects < min_objects) throw ConfigError("bad object count range");
}

namespace {

constexpr float kAgentPalettes[3][3] = {
    {0.72f, 0.45f, 0.12f},  // nominal orange
    {0.10f, 0.62f, 0.70f},  // cyan
    {0.68f, 0.12f, 0.60f},  // magenta
};

void nominal_object_color(Rng& rng, float out[3]) {
    // mid-brightness, away from both the dark background and the agent orange
    const int hue = static_cast<int>(rng.uniform_int(0, 2));
    const float v = static_cast<float>(rng.uniform(0.38, 0.68));
    const float w = static_cast<float>(rng.uniform(0.10, 0.26));
    out[0] = (hue == 0) ? v : w;
    out[1] = (hue == 1) ? v : w;
    out[2] = (hue == 2) ? v : w;
}

struct Box {
    double x, y, hx, hy;
};

bool overlaps(const Box& a, const Box& b) {
    return std::abs(a.x - b.x) <= (a.hx + b.hx) && std::abs(a.y - b.y) <= (a.hy + b.hy);
}

void rasterize_shape(Tensor& frame, int H, int W, double cx, double cy, double hx, double hy,
                     const float color[3], int shape) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - hx)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(cx + hx)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - hy)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(cy + hy)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = (x + 0.5) - cx;
            const double dy = (y + 0.5) - cy;
            bool inside = false;
            switch (shape) {
                case 0:  // box
                    inside = std::abs(dx) <= hx && std::abs(dy) <= hy;
                    break;
                case 1:  // diamond
                    inside = std::abs(dx) / hx + std::abs(dy) / hy <= 1.0;
                    break;
                case 2:  // cross
                    inside = (std::abs(dx) <= hx && std::abs(dy) <= hy * 0.38) ||
                             (std::abs(dy) <= hy && std::abs(dx) <= hx * 0.38);
                    break;
                case 3:  // disc
                    inside = (dx * dx) / (hx * hx) + (dy * dy) / (hy * hy) <= 1.0;
                    break;
                default: inside = false;
            }
            if (!inside) continue;
            float* px = frame.data() + (static_cast<int64_t>(y) * W + x) * 3;
            px[0] = color[0];
            px[1] = color[1];
            px[2] = color[2];
        }
    }
}

void render_frame(const WorldConfig& cfg, const SceneSpec& scene, double agent_x, double agent_y,
                  const std::vector<SceneObject>& objects, const Occluder& occ, float* out) {
    const int H = cfg.height, W = cfg.width;
    Tensor frame({H, W, 3});
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const float* c = scene.bg;
            if (scene.bg_stripes) c = ((y / 4) % 2 == 0) ? scene.bg_a : scene.bg_b;
            float* px = frame.data() + (static_cast<int64_t>(y) * W + x) * 3;
            px[0] = c[0];
            px[1] = c[1];
            px[2] = c[2];
        }
    }
    if (occ.present) {
        if (occ.open) {
            const float rim[3] = {occ.lid_color[0] * 0.55f, occ.lid_color[1] * 0.55f,
                                  occ.lid_color[2] * 0.55f};
            rasterize_shape(frame, H, W, occ.x, occ.y, occ.hx, occ.hy, rim, 0);
            rasterize_shape(frame, H, W, occ.x, occ.y, occ.hx * 0.55, occ.hy * 0.55,
                            occ.content_color, 0);
        } else {
            rasterize_shape(frame, H, W, occ.x, occ.y, occ.hx, occ.hy, occ.lid_color, 0);
        }
    }
    for (const SceneObject& o : objects)
        rasterize_shape(frame, H, W, o.x, o.y, o.hx, o.hy, o.color, o.shape);
    rasterize_shape(frame, H, W, agent_x, agent_y, scene.agent_half, scene.agent_half,
                    kAgentPalettes[scene.agent_palette], scene.agent_shape);
    for (int64_t i = 0; i < frame.size(); i += 3)
        for (int c = 0; c < 3; ++c)
            out[i + c] = std::clamp(frame[i + c] + scene.tint[c], 0.0f, 1.0f);
}

}  // namespace

SceneSpec sample_scene(const WorldConfig& cfg, uint64_t seed) {
    cfg.validate();
    SceneSpec scene;
    Rng base(seed, 1);  // nominal appearance; independent of ood_axis
    Rng ood(seed, 2);   // ood-axis modifications only

    const double margin_top = 5.0;  // rows 0..1 stay background for statistics
    const float bgv = static_cast<float>(base.uniform(0.08, 0.18));
    for (int c = 0; c < 3; ++c)
        scene.bg[c] = std::clamp(bgv + static_cast<float>(base.uniform(-0.015, 0.015)), 0.05f, 0.2f);

    scene.agent_half = 3.0;
    scene.agent_x = base.uniform(scene.agent_half + 1.0, cfg.width - scene.agent_half - 1.0);
    scene.agent_y =
        base.uniform(scene.agent_half + margin_top, cfg.height - scene.agent_half - 1.0);

    int count = static_cast<int>(base.uniform_int(cfg.min_objects, cfg.max_objects));
    if (cfg.ood_axis == OodAxis::kClutter)
        count = static_cast<int>(ood.uniform_int(cfg.clutter_min_objects, cfg.clutter_max_objects));

    Box agent_box{scene.agent_x, scene.agent_y, scene.agent_half, scene.agent_half};
    for (int i = 0; i < count; ++i) {
        // extra clutter objects draw from the ood stream so the nominal
        // prefix of the scene matches the base scene of the same seed
        Rng& r = (cfg.ood_axis != OodAxis::kClutter || i < cfg.max_objects) ? base : ood;
        SceneObject o;
        o.hx = r.uniform(1.6, 3.4);
        o.hy = r.uniform(1.6, 3.4);
        for (int attempt = 0; attempt < 12; ++attempt) {
            o.x = r.uniform(o.hx + 1.0, cfg.width - o.hx - 1.0);
            o.y = r.uniform(o.hy + margin_top, cfg.height - o.hy - 1.0);
            if (!overlaps(Box{o.x, o.y, o.hx, o.hy}, agent_box)) break;
        }
        nominal_object_color(r, o.color);
        o.shape = 0;
        o.mass = r.uniform(1.0, 4.0);
        o.friction = r.uniform(0.1, 0.5);
        o.deformable = r.uniform() < cfg.deformable_prob;
        scene.objects.push_back(o);
    }

    if (base.uniform() < cfg.occluder_prob) {
        Occluder& occ = scene.occluder;
        occ.present = true;
        occ.hx = base.uniform(3.0, 4.5);
        occ.hy = base.uniform(3.0, 4.5);
        occ.x = base.uniform(occ.hx + 1.0, cfg.width - occ.hx - 1.0);
        occ.y = base.uniform(occ.hy + margin_top, cfg.height - occ.hy - 1.0);
        const float v = static_cast<float>(base.uniform(0.30, 0.48));
        occ.lid_color[0] = v;
        occ.lid_color[1] = v;
        occ.lid_color[2] = static_cast<float>(base.uniform(0.35, 0.55));
        nominal_object_color(base, occ.content_color);  // hidden until opened
    }

    switch (cfg.ood_axis) {
        case OodAxis::kNone:
        case OodAxis::kClutter:
            break;
        case OodAxis::kBackground: {
            scene.bg_stripes = true;
            for (int c = 0; c < 3; ++c) {
                scene.bg_a[c] = static_cast<float>(ood.uniform(0.45, 0.70));
                scene.bg_b[c] = static_cast<float>(ood.uniform(0.45, 0.70));
            }
            break;
        }
        case OodAxis::kLighting: {
            for (int c = 0; c < 3; ++c)
                scene.tint[c] = static_cast<float>(ood.uniform(cfg.tint_min, cfg.tint_max));
            break;
        }
        case OodAxis::kTargetObject: {
            if (scene.objects.empty()) {
                SceneObject o;
                o.hx = o.hy = 2.5;
                o.x = ood.uniform(o.hx + 1.0, cfg.width - o.hx - 1.0);
                o.y = ood.uniform(o.hy + margin_top, cfg.height - o.hy - 1.0);
                o.mass = ood.uniform(1.0, 4.0);
                o.friction = ood.uniform(0.1, 0.5);
                scene.objects.push_back(o);
            }
            SceneObject& target = scene.objects.front();
            target.shape = 1 + static_cast<int>(ood.uniform_int(0, 1));  // diamond or cross
            scene.target_shape = target.shape;
            target.color[0] = static_cast<float>(ood.uniform(0.55, 0.70));
            target.color[1] = static_cast<float>(ood.uniform(0.55, 0.70));
            target.color[2] = static_cast<float>(ood.uniform(0.10, 0.22));
            break;
        }
        case OodAxis::kEffector: {
            scene.agent_palette = 1 + static_cast<int>(ood.uniform_int(0, 1));
            scene.agent_shape = (ood.uniform() < 0.5) ? 1 : 3;  // diamond or disc
            break;
        }
    }
    return scene;
}

Tensor sample_actions(const WorldConfig& cfg, uint64_t seed) {
    Rng rng(seed, 3);
    Tensor actions({cfg.frames, cfg.action_dim});
    double vx = rng.uniform(-cfg.max_speed, cfg.max_speed);
    double vy = rng.uniform(-cfg.max_speed, cfg.max_speed);
    for (int t = 0; t < cfg.frames; ++t) {
        vx = std::clamp(0.8 * vx + 0.8 * rng.normal(), -cfg.max_speed, cfg.max_speed);
        vy = std::clamp(0.8 * vy + 0.8 * rng.normal(), -cfg.max_speed, cfg.max_speed);
        actions[t * 2 + 0] = static_cast<float>(vx);
        actions[t * 2 + 1] = static_cast<float>(vy);
    }
    return actions;
}

Episode simulate(const WorldConfig& cfg, const SceneSpec& scene, const Tensor& actions,
                 uint64_t seed) {
    cfg.validate();
    if (actions.rank() != 2 || actions.dim(0) != cfg.frames || actions.dim(1) != cfg.action_dim)
        throw ShapeError("actions must have shape (T, action_dim)");

    Episode ep;
    ep.seed = seed;
    ep.ood_axis = cfg.ood_axis;
    ep.scene = scene;
    ep.actions = actions;
    ep.frames = Tensor({cfg.frames, cfg.height, cfg.width, 3});

    double ax = scene.agent_x, ay = scene.agent_y;
    std::vector<SceneObject> objects = scene.objects;
    Occluder occ = scene.occluder;
    const int64_t frame_elems = static_cast<int64_t>(cfg.height) * cfg.width * 3;

    render_frame(cfg, scene, ax, ay, objects, occ, ep.frames.data());

    for (int t = 1; t < cfg.frames; ++t) {
        const double vx = actions[(t - 1) * 2 + 0];
        const double vy = actions[(t - 1) * 2 + 1];
        ax = std::clamp(ax + vx, scene.agent_half, cfg.width - scene.agent_half);
        ay = std::clamp(ay + vy, scene.agent_half, cfg.height - scene.agent_half);
        const Box agent_box{ax, ay, scene.agent_half, scene.agent_half};

        for (SceneObject& o : objects) {
            if (overlaps(Box{o.x, o.y, o.hx, o.hy}, agent_box)) {
                if (ep.first_contact_frame < 0) ep.first_contact_frame = t;
                o.vx = vx / o.mass;  // kinematic push scaled by hidden mass
                o.vy = vy / o.mass;
                const double pen_x = (o.hx + scene.agent_half) - std::abs(o.x - ax);
                const double pen_y = (o.hy + scene.agent_half) - std::abs(o.y - ay);
                if (pen_x < pen_y)
                    o.x += (o.x >= ax ? pen_x : -pen_x);
                else
                    o.y += (o.y >= ay ? pen_y : -pen_y);
                if (o.deformable && !o.deformed) {
                    o.deformed = true;
                    o.hx *= 1.35;
                    o.hy *= 0.62;
                }
            }
            o.x = std::clamp(o.x + o.vx, o.hx, cfg.width - o.hx);
            o.y = std::clamp(o.y + o.vy, o.hy, cfg.height - o.hy);
            o.vx *= (1.0 - o.friction);
            o.vy *= (1.0 - o.friction);
        }
        if (occ.present && !occ.open && overlaps(Box{occ.x, occ.y, occ.hx, occ.hy}, agent_box)) {
            occ.open = true;  // interior color becomes visible
            if (ep.first_contact_frame < 0) ep.first_contact_frame = t;
        }
        render_frame(cfg, scene, ax, ay, objects, occ, ep.frames.data() + t * frame_elems);
    }
    return ep;
}

Episode generate_episode(const WorldConfig& cfg, uint64_t seed) {
    SceneSpec scene = sample_scene(cfg, seed);
    Tensor actions = sample_actions(cfg, seed);
    return simulate(cfg, scene, actions, seed);
}

double appearance_statistic(const Episode& ep, OodAxis axis) {
    switch (axis) {
        case OodAxis::kBackground:
        case OodAxis::kLighting: {
            // mean of the top two rows of frame 0; spawn margins keep them
            // free of objects, so this reads pure background (plus tint)
            const int W = static_cast<int>(ep.frames.dim(2));
            double acc = 0.0;
            const int64_t n = 2LL * W * 3;
            for (int64_t i = 0; i < n; ++i) acc += ep.frames[i];
            return acc / static_cast<double>(n);
        }
        case OodAxis::kClutter: return static_cast<double>(ep.scene.objects.size());
        case OodAxis::kTargetObject: return static_cast<double>(ep.scene.target_shape);
        case OodAxis::kEffector: return static_cast<double>(ep.scene.agent_palette);
        case OodAxis::kNone: return 0.0;
    }
    return 0.0;
}

// ---------------- dataset persistence ----------------

namespace {

json config_to_json(const WorldConfig& c) {
    return json{{"height", c.height},
                {"width", c.width},
                {"channels", c.channels},
                {"frames", c.frames},
                {"action_dim", c.action_dim},
                {"ood_axis", ood_axis_name(c.ood_axis)},
                {"min_objects", c.min_objects},
                {"max_objects", c.max_objects},
                {"clutter_min_objects", c.clutter_min_objects},
                {"clutter_max_objects", c.clutter_max_objects},
                {"occluder_prob", c.occluder_prob},
                {"deformable_prob", c.deformable_prob},
                {"max_speed", c.max_speed},
                {"tint_min", c.tint_min},
                {"tint_max", c.tint_max}};
}

WorldConfig config_from_json(const json& j) {
    WorldConfig c;
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.channels = j.value("channels", c.channels);
    c.frames = j.value("frames", c.frames);
    c.action_dim = j.value("action_dim", c.action_dim);
    c.ood_axis = ood_axis_from_name(j.value("ood_axis", "none"));
    c.min_objects = j.value("min_objects", c.min_objects);
    c.max_objects = j.value("max_objects", c.max_objects);
    c.clutter_min_objects = j.value("clutter_min_objects", c.clutter_min_objects);
    c.clutter_max_objects = j.value("clutter_max_objects", c.clutter_max_objects);
    c.occluder_prob = j.value("occluder_prob", c.occluder_prob);
    c.deformable_prob = j.value("deformable_prob", c.deformable_prob);
    c.max_speed = j.value("max_speed", c.max_speed);
    c.tint_min = j.value("tint_min", c.tint_min);
    c.tint_max = j.value("tint_max", c.tint_max);
    return c;
}

}  // namespace

std::vector<int> DatasetManifest::indices(const std::string& split) const {
    std::vector<int> out;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == split) out.push_back(static_cast<int>(i));
    return out;
}

DatasetManifest generate_dataset(const WorldConfig& cfg, int n, uint64_t seed,
                                 const std::string& out_dir, bool overwrite,
                                 double train_fraction) {
    cfg.validate();
    if (n < 1) throw ConfigError("dataset needs at least one episode");
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
        throw ConfigError("train fraction must lie in [0,1]");
    if (fs::exists(out_dir)) {
        if (!overwrite)
            throw ConfigError("output directory exists (pass overwrite to replace): " + out_dir);
        fs::remove_all(out_dir);
    }
    fs::create_directories(out_dir);

    DatasetManifest manifest;
    manifest.cfg = cfg;
    manifest.train_fraction = train_fraction;
    const int train_count = static_cast<int>(std::floor(manifest.train_fraction * n));

    std::ofstream bin(out_dir + "/episodes.bin", std::ios::binary);
    if (!bin) throw MissingArtifactError("cannot create " + out_dir + "/episodes.bin");

    Rng seeder(seed);
    int64_t offset = 0;
    for (int i = 0; i < n; ++i) {
        const uint64_t ep_seed = seeder.fork(static_cast<uint64_t>(i)).next_u64();
        Episode ep = generate_episode(cfg, ep_seed);
        ManifestEntry e;
        e.seed = ep_seed;
        e.ood_axis = cfg.ood_axis;
        e.split = (i < train_count) ? "train" : "test";
        e.frames_offset = offset;
        blob::write(bin, ep.frames);
        offset += blob::byte_size(ep.frames.shape());
        e.actions_offset = offset;
        blob::write(bin, ep.actions);
        offset += blob::byte_size(ep.actions.shape());
        manifest.entries.push_back(e);
    }
    bin.close();

    json j;
    j["version"] = manifest.version;
    j["cfg"] = config_to_json(cfg);
    j["train_fraction"] = manifest.train_fraction;
    json entries = json::array();
    for (const auto& e : manifest.entries)
        entries.push_back(json{{"seed", e.seed},
                               {"ood_axis", ood_axis_name(e.ood_axis)},
                               {"split", e.split},
                               {"frames_offset", e.frames_offset},
                               {"actions_offset", e.actions_offset}});
    j["entries"] = entries;
    std::ofstream mf(out_dir + "/manifest.json");
    mf << j.dump(2) << "\n";
    if (!mf) throw MissingArtifactError("cannot write manifest in " + out_dir);
    return manifest;
}

DatasetManifest load_manifest(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw MissingArtifactError("missing dataset manifest: " + dir + "/manifest.json");
    json j;
    mf >> j;
    DatasetManifest m;
    m.version = j.value("version", 1);
    m.cfg = config_from_json(j.at("cfg"));
    m.train_fraction = j.value("train_fraction", 0.9);
    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        e.seed = je.at("seed").get<uint64_t>();
        e.ood_axis = ood_axis_from_name(je.at("ood_axis").get<std::string>());
        e.split = je.at("split").get<std::string>();
        e.frames_offset = je.at("frames_offset").get<int64_t>();
        e.actions_offset = je.at("actions_offset").get<int64_t>();
        m.entries.push_back(e);
    }
    return m;
}

Episode load_episode(const std::string& dir, const DatasetManifest& manifest, int index) {
    if (index < 0 || index >= static_cast<int>(manifest.entries.size()))
        throw MissingArtifactError("episode index out of range");
    const ManifestEntry& e = manifest.entries[static_cast<size_t>(index)];
    Episode ep;
    ep.frames = blob::read_at(dir + "/episodes.bin", e.frames_offset);
    ep.actions = blob::read_at(dir + "/episodes.bin", e.actions_offset);
    ep.seed = e.seed;
    ep.ood_axis = e.ood_axis;
    return ep;
}

}  // namespace calvid
