#include "calvid/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "calvid/autograd.hpp"
#include "calvid/errors.hpp"
#include "calvid/optim.hpp"
#include "calvid/rng.hpp"

namespace calvid {

namespace {

void check_frame_geometry(const CodecConfig& cfg, const Tensor& frames) {
    if (frames.rank() != 4 || frames.dim(3) != 3)
        throw ShapeError("expected pixel video (T,H,W,3), got " + shape_str(frames.shape()));
    if (frames.dim(1) % cfg.patch != 0 || frames.dim(2) % cfg.patch != 0)
        throw ShapeError("frame extents must be divisible by the patch factor");
}

// (T,H,W,3) -> (T*nh*nw, patch*patch*3)
Tensor to_patches(const CodecConfig& cfg, const Tensor& frames) {
    check_frame_geometry(cfg, frames);
    const int64_t T = frames.dim(0), H = frames.dim(1), W = frames.dim(2);
    const int p = cfg.patch;
    const int64_t nh = H / p, nw = W / p, D = cfg.patch_dim();
    Tensor out({T * nh * nw, D});
    int64_t row = 0;
    for (int64_t f = 0; f < T; ++f)
        for (int64_t by = 0; by < nh; ++by)
            for (int64_t bx = 0; bx < nw; ++bx, ++row) {
                float* dst = out.data() + row * D;
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px) {
                        const float* src =
                            frames.data() + (((f * H) + by * p + py) * W + bx * p + px) * 3;
                        for (int c = 0; c < 3; ++c) *dst++ = src[c];
                    }
            }
    return out;
}

Tensor from_patches(const CodecConfig& cfg, const Tensor& patches, int64_t T, int64_t H,
                    int64_t W) {
    const int p = cfg.patch;
    const int64_t nh = H / p, nw = W / p, D = cfg.patch_dim();
    if (patches.rank() != 2 || patches.dim(0) != T * nh * nw || patches.dim(1) != D)
        throw ShapeError("patch matrix does not match target geometry");
    Tensor out({T, H, W, 3});
    int64_t row = 0;
    for (int64_t f = 0; f < T; ++f)
        for (int64_t by = 0; by < nh; ++by)
            for (int64_t bx = 0; bx < nw; ++bx, ++row) {
                const float* src = patches.data() + row * D;
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px) {
                        float* dst =
                            out.data() + (((f * H) + by * p + py) * W + bx * p + px) * 3;
                        for (int c = 0; c < 3; ++c) dst[c] = *src++;
                    }
            }
    return out;
}

Tensor apply_linear(const Linear& lin, const Tensor& x) {
    Tensor out({x.dim(0), lin.w.dim(1)});
    detail::matmul_values(x, lin.w, out);
    const int64_t R = out.dim(0), C = out.dim(1);
    for (int64_t i = 0; i < R; ++i)
        for (int64_t j = 0; j < C; ++j) out[i * C + j] += lin.b[j];
    return out;
}

void tanh_inplace(Tensor& t) {
    for (int64_t i = 0; i < t.size(); ++i) t[i] = std::tanh(t[i]);
}

Tensor encode_patches(const CodecParams& codec, const Tensor& patches) {
    Tensor h = apply_linear(codec.enc1, patches);
    tanh_inplace(h);
    return apply_linear(codec.enc2, h);
}

Tensor decode_patches_raw(const CodecParams& codec, const Tensor& latents) {
    Tensor h = apply_linear(codec.dec1, latents);
    tanh_inplace(h);
    return apply_linear(codec.dec2, h);
}

}  // namespace

CodecParams CodecParams::create(const CodecConfig& cfg, uint64_t seed) {
    CodecParams p;
    p.cfg = cfg;
    p.seed = seed;
    Rng rng(seed, 11);
    p.enc1.init(rng, cfg.patch_dim(), cfg.hidden);
    p.enc2.init(rng, cfg.hidden, cfg.latent_channels);
    p.dec1.init(rng, cfg.latent_channels, cfg.hidden);
    p.dec2.init(rng, cfg.hidden, cfg.patch_dim());
    return p;
}

void CodecParams::visit(const ParamVisitor& fn) {
    enc1.visit("enc1", fn);
    enc2.visit("enc2", fn);
    dec1.visit("dec1", fn);
    dec2.visit("dec2", fn);
}

Tensor encode(const CodecParams& codec, const Tensor& frames) {
    check_frame_geometry(codec.cfg, frames);
    const int64_t T = frames.dim(0);
    const int64_t nh = frames.dim(1) / codec.cfg.patch;
    const int64_t nw = frames.dim(2) / codec.cfg.patch;
    Tensor lat = encode_patches(codec, to_patches(codec.cfg, frames));
    return lat.reshaped({T, nh, nw, codec.cfg.latent_channels});
}

Tensor decode(const CodecParams& codec, const Tensor& latent) {
    if (latent.rank() != 4 || latent.dim(3) != codec.cfg.latent_channels)
        throw ShapeError("expected latent video (T,h,w," +
                         std::to_string(codec.cfg.latent_channels) + "), got " +
                         shape_str(latent.shape()));
    const int64_t T = latent.dim(0);
    const int64_t H = latent.dim(1) * codec.cfg.patch;
    const int64_t W = latent.dim(2) * codec.cfg.patch;
    Tensor rows = latent.reshaped({T * latent.dim(1) * latent.dim(2), codec.cfg.latent_channels});
    Tensor patches = decode_patches_raw(codec, rows);
    Tensor frames = from_patches(codec.cfg, patches, T, H, W);
    for (int64_t i = 0; i < frames.size(); ++i) frames[i] = std::clamp(frames[i], 0.0f, 1.0f);
    return frames;
}

double psnr(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse <= 0.0) return 99.0;
    return 10.0 * std::log10(1.0 / mse);
}

CodecParams train_codec(const std::vector<Tensor>& train_frames,
                        const std::vector<Tensor>& heldout_frames, uint64_t seed,
                        const CodecConfig& cfg, const CodecTrainOptions& opts) {
    if (train_frames.empty()) throw ConfigError("codec training needs a nonempty dataset");
    CodecParams codec = CodecParams::create(cfg, seed);
    Rng rng(seed, 12);

    // gather patch rows
    std::vector<Tensor> patch_mats;
    int64_t total_rows = 0;
    for (const Tensor& f : train_frames) {
        Tensor video = (f.rank() == 3) ? f.reshaped({1, f.dim(0), f.dim(1), f.dim(2)}) : f;
        patch_mats.push_back(to_patches(cfg, video));
        total_rows += patch_mats.back().dim(0);
    }
    const int64_t D = cfg.patch_dim();
    int64_t aug_rows = static_cast<int64_t>(opts.color_augment_fraction * total_rows);
    Tensor data({total_rows + aug_rows, D});
    int64_t row = 0;
    for (const Tensor& m : patch_mats) {
        std::copy(m.data(), m.data() + m.size(), data.data() + row * D);
        row += m.dim(0);
    }
    for (int64_t i = 0; i < aug_rows; ++i, ++row) {
        float c[3];
        const int64_t kind = rng.uniform_int(0, 5);
        if (kind < 3) {
            c[0] = c[1] = c[2] = 0.0f;
            c[kind] = 1.0f;  // primary
        } else {
            for (float& v : c) v = rng.uniform_float();
        }
        float* dst = data.data() + row * D;
        for (int64_t j = 0; j < D; ++j) dst[j] = c[j % 3];
    }
    const int64_t n_rows = data.dim(0);

    const int64_t steps_per_epoch = std::max<int64_t>(1, n_rows / opts.batch_patches);
    CosineSchedule lr{opts.lr, static_cast<int64_t>(opts.epochs) * steps_per_epoch};
    int64_t step = 0;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (int64_t s = 0; s < steps_per_epoch; ++s, ++step) {
            Tensor batch({opts.batch_patches, D});
            for (int64_t b = 0; b < opts.batch_patches; ++b) {
                const int64_t src = rng.uniform_int(0, n_rows - 1);
                std::copy(data.data() + src * D, data.data() + (src + 1) * D,
                          batch.data() + b * D);
            }
            Tape tape;
            ParamBinder bind(tape);
            Var x = tape.constant(batch);
            Var h = tanh_act(codec.enc1.apply(bind, x));
            Var lat = codec.enc2.apply(bind, h);
            Var h2 = tanh_act(codec.dec1.apply(bind, lat));
            Var rec = codec.dec2.apply(bind, h2);
            Var loss = mse_loss(rec, x);
            const double lv = loss.value()[0];
            if (!std::isfinite(lv)) throw DivergenceError("codec training loss is not finite");
            epoch_loss += lv;
            auto grads = tape.grad(loss, bind.vars());
            sgd_step(bind.params(), grads, lr.lr(step));
        }
        epoch_loss /= static_cast<double>(steps_per_epoch);
        if (!codec.epoch_losses.empty() && epoch_loss > codec.epoch_losses.back()) {
            std::ostringstream os;
            os << "codec training diverged: epoch average loss rose from "
               << codec.epoch_losses.back() << " to " << epoch_loss << " at epoch " << epoch
               << "; record:";
            for (double l : codec.epoch_losses) os << " " << l;
            throw DivergenceError(os.str());
        }
        codec.epoch_losses.push_back(epoch_loss);
    }

    // held-out reconstruction quality
    const std::vector<Tensor>& held = heldout_frames.empty() ? train_frames : heldout_frames;
    double mse = 0.0, max_err = 0.0;
    int64_t count = 0;
    for (const Tensor& f : held) {
        Tensor video = (f.rank() == 3) ? f.reshaped({1, f.dim(0), f.dim(1), f.dim(2)}) : f;
        Tensor rec = decode(codec, encode(codec, video));
        for (int64_t i = 0; i < video.size(); ++i) {
            const double d = static_cast<double>(rec[i]) - video[i];
            mse += d * d;
            max_err = std::max(max_err, std::abs(d));
        }
        count += video.size();
    }
    mse /= static_cast<double>(std::max<int64_t>(1, count));
    codec.heldout_psnr = (mse <= 0.0) ? 99.0 : 10.0 * std::log10(1.0 / mse);
    codec.heldout_max_abs_err = max_err;
    return codec;
}

LatentColorMap build_colormap(const CodecParams& codec, int height, int width,
                              bool allow_untrained) {
    if (!allow_untrained && !codec.trained())
        throw DivergenceError("codec is untrained (held-out PSNR " +
                              std::to_string(codec.heldout_psnr) + " below floor " +
                              std::to_string(codec.psnr_floor) + ")");
    auto mono = [&](float r, float g, float b) {
        Tensor frame({1, height, width, 3});
        for (int64_t i = 0; i < frame.size(); i += 3) {
            frame[i] = r;
            frame[i + 1] = g;
            frame[i + 2] = b;
        }
        return frame;
    };
    LatentColorMap map;
    const Tensor red = mono(1, 0, 0), green = mono(0, 1, 0), blue = mono(0, 0, 1);
    Tensor lr = encode(codec, red), lg = encode(codec, green), lb = encode(codec, blue);
    map.basis_r = lr.reshaped({lr.dim(1), lr.dim(2), lr.dim(3)});
    map.basis_g = lg.reshaped({lg.dim(1), lg.dim(2), lg.dim(3)});
    map.basis_b = lb.reshaped({lb.dim(1), lb.dim(2), lb.dim(3)});

    auto mean_abs_diff = [](const Tensor& a, const Tensor& b) {
        double acc = 0.0;
        for (int64_t i = 0; i < a.size(); ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
        return acc / static_cast<double>(a.size());
    };
    const Tensor dr = decode(codec, lr), dg = decode(codec, lg), db = decode(codec, lb);
    map.basis_separation = std::min({mean_abs_diff(dr, dg), mean_abs_diff(dr, db),
                                     mean_abs_diff(dg, db)});
    if (!allow_untrained && map.basis_separation <= 0.3)
        throw DivergenceError("decoded color bases are too close (" +
                              std::to_string(map.basis_separation) +
                              " mean-abs); heatmaps would be unreadable");
    return map;
}

}  // namespace calvid
