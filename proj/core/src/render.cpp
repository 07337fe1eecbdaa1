#include "calvid/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "calvid/errors.hpp"

namespace calvid {

namespace {

/// Blends the three basis latents at parameter u in [0,1]:
/// u=0 -> first, u=0.5 -> second, u=1 -> third.
void blend_basis(const Tensor& b0, const Tensor& b1, const Tensor& b2, double u, int64_t loc,
                 int64_t channels, float* out) {
    u = std::clamp(u, 0.0, 1.0);
    const Tensor* lo = &b0;
    const Tensor* hi = &b1;
    double w = u / 0.5;
    if (u > 0.5) {
        lo = &b1;
        hi = &b2;
        w = (u - 0.5) / 0.5;
    }
    const float fw = static_cast<float>(w);
    for (int64_t c = 0; c < channels; ++c)
        out[c] = (1.0f - fw) * (*lo)[loc * channels + c] + fw * (*hi)[loc * channels + c];
}

Tensor colorize_scalar_field(const Tensor& u_field /* (T, locations) */, const Tensor& b0,
                             const Tensor& b1, const Tensor& b2, const CodecParams& codec,
                             int64_t lat_h, int64_t lat_w) {
    const int64_t T = u_field.dim(0);
    const int64_t locs = u_field.dim(1);
    const int64_t C = codec.cfg.latent_channels;
    Tensor latent({T, lat_h, lat_w, C});
    for (int64_t f = 0; f < T; ++f)
        for (int64_t l = 0; l < locs; ++l)
            blend_basis(b0, b1, b2, u_field[f * locs + l], l, C,
                        latent.data() + (f * locs + l) * C);
    return decode(codec, latent);
}

Tensor channel_mean_field(const Tensor& x /* (T,h,w,C) */) {
    const int64_t T = x.dim(0), locs = x.dim(1) * x.dim(2), C = x.dim(3);
    Tensor out({T, locs});
    for (int64_t i = 0; i < T * locs; ++i) {
        double acc = 0.0;
        for (int64_t c = 0; c < C; ++c) acc += x[i * C + c];
        out[i] = static_cast<float>(acc / static_cast<double>(C));
    }
    return out;
}

}  // namespace

Tensor render_confidence(const Tensor& q, const LatentColorMap& map, const CodecParams& codec) {
    if (q.rank() != 4) throw ShapeError("confidence map must be (T,h,w,C)");
    if (q.dim(1) != map.basis_g.dim(0) || q.dim(2) != map.basis_g.dim(1))
        throw ShapeError("confidence map does not match the colormap geometry");
    for (int64_t i = 0; i < q.size(); ++i)
        if (!(q[i] >= 0.0f && q[i] <= 1.0f))
            throw ConfigError("confidence values must lie in [0,1]");
    Tensor u = channel_mean_field(q);
    // green at 0, red at 0.5, blue at 1
    return colorize_scalar_field(u, map.basis_g, map.basis_r, map.basis_b, codec, q.dim(1),
                                 q.dim(2));
}

Tensor render_error_map(const Tensor& x_hat, const Tensor& x_star, const LatentColorMap& map,
                        const CodecParams& codec, double span_lo, double span_hi) {
    check_same_shape(x_hat, x_star, "render_error_map");
    if (!(span_hi > span_lo)) throw ConfigError("empty error span");
    if (x_hat.rank() != 4) throw ShapeError("latent video must be (T,h,w,C)");
    Tensor err(x_hat.shape());
    for (int64_t i = 0; i < err.size(); ++i) err[i] = std::abs(x_hat[i] - x_star[i]);
    Tensor u = channel_mean_field(err);
    const double span = span_hi - span_lo;
    for (int64_t i = 0; i < u.size(); ++i)
        u[i] = static_cast<float>(std::clamp((u[i] - span_lo) / span, 0.0, 1.0));
    // blue at the span minimum, red at the middle, green at the maximum
    return colorize_scalar_field(u, map.basis_b, map.basis_r, map.basis_g, codec, x_hat.dim(1),
                                 x_hat.dim(2));
}

Tensor composite(const Tensor& base, const Tensor& overlay, double opacity) {
    check_same_shape(base, overlay, "composite");
    if (!(opacity >= 0.0 && opacity <= 1.0)) throw ConfigError("opacity must lie in [0,1]");
    const float a = static_cast<float>(opacity);
    Tensor out(base.shape());
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp((1.0f - a) * base[i] + a * overlay[i], 0.0f, 1.0f);
    return out;
}

void write_ppm(const std::string& path, const Tensor& frame) {
    if (frame.rank() != 3 || frame.dim(2) != 3) throw ShapeError("PPM frames must be (H,W,3)");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MissingArtifactError("cannot write image: " + path);
    os << "P6\n" << frame.dim(1) << " " << frame.dim(0) << "\n255\n";
    for (int64_t i = 0; i < frame.size(); ++i) {
        const float v = std::clamp(frame[i], 0.0f, 1.0f);
        os.put(static_cast<char>(std::lround(v * 255.0f)));
    }
    if (!os) throw MissingArtifactError("short write: " + path);
}

std::string reliability_svg(const ReliabilityReport& report) {
    const double W = 460, H = 460;
    const double L = 56, R = 20, T = 24, B = 44;
    const double pw = W - L - R, ph = H - T - B;
    const int M = report.num_bins;

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W
       << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "  <g fill=\"none\" stroke=\"#444\" stroke-width=\"1\">\n"
       << "    <path d=\"M " << L << " " << T << " L " << L << " " << (T + ph) << " L "
       << (L + pw) << " " << (T + ph) << "\"/>\n"
       << "  </g>\n";

    int64_t max_count = 1;
    for (const auto& b : report.bins) max_count = std::max(max_count, b.count);

    // bars: one rect per nonempty bin
    for (int m = 0; m < M; ++m) {
        const auto& b = report.bins[static_cast<size_t>(m)];
        if (!b.count) continue;
        const double acc = report.acc(m);
        const double x = L + pw * m / M;
        const double bw = pw / M;
        const double bh = ph * acc;
        os << "  <rect x=\"" << x + 0.5 << "\" y=\"" << (T + ph - bh) << "\" width=\""
           << bw - 1.0 << "\" height=\"" << bh
           << "\" fill=\"#4878b0\" fill-opacity=\"0.85\"/>\n";
    }

    // perfect-calibration diagonal
    os << "  <line x1=\"" << L << "\" y1=\"" << (T + ph) << "\" x2=\"" << (L + pw) << "\" y2=\""
       << T << "\" stroke=\"#222\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n";

    // density markers: a cross per nonempty bin at height count/max_count
    for (int m = 0; m < M; ++m) {
        const auto& b = report.bins[static_cast<size_t>(m)];
        if (!b.count) continue;
        const double cx = L + pw * (m + 0.5) / M;
        const double cy = T + ph - ph * (static_cast<double>(b.count) / max_count);
        os << "  <path d=\"M " << cx - 3 << " " << cy - 3 << " L " << cx + 3 << " " << cy + 3
           << " M " << cx - 3 << " " << cy + 3 << " L " << cx + 3 << " " << cy - 3
           << "\" stroke=\"#c0392b\" stroke-width=\"1.4\"/>\n";
    }

    os << "  <text x=\"" << (L + pw / 2) << "\" y=\"" << (H - 10)
       << "\" font-size=\"13\" text-anchor=\"middle\">confidence</text>\n";
    os << "  <text x=\"14\" y=\"" << (T + ph / 2)
       << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
       << (T + ph / 2) << ")\">accuracy</text>\n";
    os << "  <text x=\"" << (L + 6) << "\" y=\"" << (T + 14) << "\" font-size=\"12\">ECE="
       << report.ece << " MCE=" << report.mce << " n=" << report.n << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

void render_reliability_svg(const ReliabilityReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw MissingArtifactError("cannot write SVG: " + path);
    os << reliability_svg(report);
}

}  // namespace calvid
