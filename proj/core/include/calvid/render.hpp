#pragma once

#include <string>

#include "calvid/calibration.hpp"
#include "calvid/codec.hpp"
#include "calvid/tensor.hpp"

namespace calvid {

/// Decodes per-subpatch confidence into RGB heatmap frames. Channel
/// confidences at each latent location are averaged to one scalar, the
/// latent color is the piecewise-linear blend of the basis latents (green at
/// 0, red at 0.5, blue at 1), and the result is decoded to pixels.
Tensor render_confidence(const Tensor& q, const LatentColorMap& map, const CodecParams& codec);

/// Latent-space error visualization: per-element |x_hat - x_star| is
/// averaged over channels, clipped to the span and mapped blue (span min) ->
/// red (mid) -> green (span max), then decoded to pixels.
Tensor render_error_map(const Tensor& x_hat, const Tensor& x_star, const LatentColorMap& map,
                        const CodecParams& codec, double span_lo = 0.0, double span_hi = 1.0);

/// (1-opacity) * base + opacity * overlay, clipped to [0,1].
Tensor composite(const Tensor& base, const Tensor& overlay, double opacity);

/// Binary PPM (P6) writer; one frame (H,W,3) per file, values rounded to
/// 8-bit. Bit-exact across runs.
void write_ppm(const std::string& path, const Tensor& frame);

/// Reliability diagram as SVG 1.1: one bar rect per nonempty bin, the dashed
/// perfect-calibration diagonal and cross markers showing per-bin density.
std::string reliability_svg(const ReliabilityReport& report);
void render_reliability_svg(const ReliabilityReport& report, const std::string& path);

}  // namespace calvid
