#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calvid/rng.hpp"
#include "calvid/tensor.hpp"

namespace calvid {

enum class OodAxis { kNone, kBackground, kLighting, kClutter, kTargetObject, kEffector };

const char* ood_axis_name(OodAxis axis);
OodAxis ood_axis_from_name(const std::string& name);
inline constexpr int kOodAxisCount = 5;
std::vector<OodAxis> all_ood_axes();

struct WorldConfig {
    int height = 32;
    int width = 32;
    int channels = 3;
    int frames = 8;  // episode length T
    int action_dim = 2;
    OodAxis ood_axis = OodAxis::kNone;

    int min_objects = 1;
    int max_objects = 2;
    int clutter_min_objects = 5;
    int clutter_max_objects = 7;
    double occluder_prob = 0.4;
    double deformable_prob = 0.35;
    double max_speed = 2.5;  // px per frame

    // Lighting-axis tint magnitude per channel. Base palette stays below
    // 0.72 so the shift never clips.
    double tint_min = 0.18;
    double tint_max = 0.28;

    void validate() const;
};

/// One rigid or deformable pushable box. mass/friction/deformable are hidden
/// physics parameters: they influence pixels only after first contact and are
/// never serialized.
struct SceneObject {
    double x = 0, y = 0;
    double hx = 2, hy = 2;
    float color[3] = {0, 0, 0};
    int shape = 0;  // 0 square, 1 diamond, 2 cross

    double mass = 1.0;
    double friction = 0.2;
    bool deformable = false;

    double vx = 0, vy = 0;
    bool deformed = false;
};

/// Container whose interior color is hidden until the agent touches it.
struct Occluder {
    bool present = false;
    double x = 0, y = 0;
    double hx = 4, hy = 4;
    float lid_color[3] = {0, 0, 0};
    float content_color[3] = {0, 0, 0};  // hidden parameter
    bool open = false;
};

struct SceneSpec {
    float bg[3] = {0.12f, 0.12f, 0.12f};
    bool bg_stripes = false;
    float bg_a[3] = {0, 0, 0};
    float bg_b[3] = {0, 0, 0};

    double agent_x = 16, agent_y = 16;
    double agent_half = 3.0;
    int agent_palette = 0;  // effector-axis statistic
    int agent_shape = 0;    // rendering only; collision box unchanged

    std::vector<SceneObject> objects;
    Occluder occluder;
    int target_shape = 0;  // target-object-axis statistic

    float tint[3] = {0, 0, 0};  // lighting shift applied after rasterization
};

struct Episode {
    Tensor frames;   // (T,H,W,3) in [0,1]
    Tensor actions;  // (T,m)
    uint64_t seed = 0;
    OodAxis ood_axis = OodAxis::kNone;

    // In-memory provenance for tests and OOD statistics; the hidden physics
    // parameters inside `scene` are never written to disk.
    SceneSpec scene;
    int first_contact_frame = -1;
};

/// Samples scene appearance + hidden physics. The nominal part of the scene
/// consumes a stream independent of ood_axis, so lighting-shifted episodes
/// share their base scene with the nominal episode of the same seed.
SceneSpec sample_scene(const WorldConfig& cfg, uint64_t seed);

/// Smooth random planar-velocity action trajectory, shape (T, action_dim).
Tensor sample_actions(const WorldConfig& cfg, uint64_t seed);

/// Deterministic kinematic rollout of the scene under the action sequence.
Episode simulate(const WorldConfig& cfg, const SceneSpec& scene, const Tensor& actions,
                 uint64_t seed);

Episode generate_episode(const WorldConfig& cfg, uint64_t seed);

/// Scalar appearance statistic used by the OOD-separation checks. Background
/// and lighting read pixels (top-row / global means); clutter, target-object
/// and effector read the scene record (object count, shape id, palette id).
double appearance_statistic(const Episode& ep, OodAxis axis);

struct ManifestEntry {
    uint64_t seed = 0;
    OodAxis ood_axis = OodAxis::kNone;
    std::string split;  // "train" | "test"
    int64_t frames_offset = 0;
    int64_t actions_offset = 0;
};

struct DatasetManifest {
    int version = 1;
    WorldConfig cfg;
    double train_fraction = 0.9;
    std::vector<ManifestEntry> entries;

    std::vector<int> indices(const std::string& split) const;
};

/// Writes `n` episodes to out_dir/episodes.bin plus out_dir/manifest.json.
/// The first floor(train_fraction*n) episodes are tagged train, the rest
/// test (default 90/10). Refuses to touch an existing directory unless
/// `overwrite` is set.
DatasetManifest generate_dataset(const WorldConfig& cfg, int n, uint64_t seed,
                                 const std::string& out_dir, bool overwrite,
                                 double train_fraction = 0.9);

DatasetManifest load_manifest(const std::string& dir);
Episode load_episode(const std::string& dir, const DatasetManifest& manifest, int index);

}  // namespace calvid
