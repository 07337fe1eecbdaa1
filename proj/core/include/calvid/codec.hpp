#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "calvid/nn.hpp"
#include "calvid/tensor.hpp"

namespace calvid {

struct CodecConfig {
    int patch = 4;
    int latent_channels = 4;
    int hidden = 24;

    int64_t patch_dim() const { return static_cast<int64_t>(patch) * patch * 3; }
};

/// Per-patch convolutional autoencoder (stride == kernel == patch). Encoder:
/// patchify -> hidden tanh -> latent channels. Decoder mirrors it.
struct CodecParams {
    CodecConfig cfg;
    uint64_t seed = 0;

    Linear enc1, enc2;
    Linear dec1, dec2;

    // training record
    std::vector<double> epoch_losses;
    double heldout_psnr = 0.0;
    double heldout_max_abs_err = 1.0;
    double psnr_floor = 24.0;

    static CodecParams create(const CodecConfig& cfg, uint64_t seed);
    bool trained() const { return heldout_psnr >= psnr_floor; }
    void visit(const ParamVisitor& fn);
};

/// (frames, H, W, 3) -> (frames, H/patch, W/patch, latent_channels)
Tensor encode(const CodecParams& codec, const Tensor& frames);
/// Inverse geometry; output clipped to [0,1].
Tensor decode(const CodecParams& codec, const Tensor& latent);

struct CodecTrainOptions {
    int epochs = 3;
    double lr = 0.15;
    int batch_patches = 512;
    /// Constant-color patches (RGB primaries + random colors) mixed into
    /// training so monochromatic frames encode faithfully for the color map.
    double color_augment_fraction = 0.03;
};

/// Trains on the given frames; per-epoch mean loss must decrease or training
/// aborts with a DivergenceError carrying the loss record. Held-out PSNR and
/// max-abs reconstruction error are recorded on `heldout`.
CodecParams train_codec(const std::vector<Tensor>& train_frames,
                        const std::vector<Tensor>& heldout_frames, uint64_t seed,
                        const CodecConfig& cfg = {}, const CodecTrainOptions& opts = {});

/// Latents of monochromatic red/green/blue frames plus the knot placement of
/// the confidence-to-color curve (green at 0, red at 0.5, blue at 1).
struct LatentColorMap {
    Tensor basis_r, basis_g, basis_b;  // (H_l, W_l, C_l) each
    std::array<double, 3> knots{0.0, 0.5, 1.0};
    double basis_separation = 0.0;  // min pairwise mean-abs pixel difference
};

/// Encodes the three monochromatic basis frames for a (height, width) arena.
/// Throws DivergenceError if the codec is untrained (PSNR floor unmet) unless
/// allow_untrained, or if the decoded bases are closer than 0.3 mean-abs.
LatentColorMap build_colormap(const CodecParams& codec, int height, int width,
                              bool allow_untrained = false);

/// Reconstruction quality helpers.
double psnr(const Tensor& a, const Tensor& b);

}  // namespace calvid
