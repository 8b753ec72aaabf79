#pragma once

// Small trainable fully convolutional network implementing the patch
// prediction contract: a 2-channel (image + memory) U-shaped segmentation
// path with skip connections, plus two recognition heads branching off the
// compression bottom — label regression (ReLU output) and completeness
// classification (sigmoid output). Training uses single-patch batches; the
// image channel is instance-normalized per patch instead of batch-normalized.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "iterseg/prediction.hpp"
#include "iterseg/rng.hpp"
#include "iterseg/volume.hpp"

namespace iterseg {

struct SegmentorConfig {
    int channels = 8;
    int depth = 2;  // number of down/up levels
    Vec3i patch_size{32, 32, 32};
    int head_width = 8;

    void validate() const {
        if (channels < 1) throw std::invalid_argument("SegmentorConfig: channels must be >= 1");
        if (depth < 1) throw std::invalid_argument("SegmentorConfig: depth must be >= 1");
        if (head_width < 1) throw std::invalid_argument("SegmentorConfig: head_width must be >= 1");
        const int div = 1 << depth;
        for (int a = 0; a < 3; ++a) {
            if (patch_size[a] < div || patch_size[a] % div != 0)
                throw std::invalid_argument("SegmentorConfig: patch_size must be divisible by 2^depth");
        }
    }
};

namespace net_detail {

/// Channel-major dense activation block: [c][z][y][x], x fastest.
template <typename T>
struct Volume {
    int ch = 0;
    Vec3i dims;
    std::vector<T> v;

    Volume() = default;
    Volume(int c, Vec3i d) : ch(c), dims(d), v(static_cast<std::size_t>(c) * d.x * d.y * d.z, T{}) {}

    std::size_t plane() const { return static_cast<std::size_t>(dims.x) * dims.y * dims.z; }
    T* channel(int c) { return v.data() + static_cast<std::size_t>(c) * plane(); }
    const T* channel(int c) const { return v.data() + static_cast<std::size_t>(c) * plane(); }
};

template <typename T>
void pad_channel(const T* src, Vec3i d, std::vector<T>& dst) {
    const int px = d.x + 2, py = d.y + 2, pz = d.z + 2;
    dst.assign(static_cast<std::size_t>(px) * py * pz, T{});
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            std::memcpy(&dst[(static_cast<std::size_t>(z + 1) * py + (y + 1)) * px + 1],
                        &src[(static_cast<std::size_t>(z) * d.y + y) * d.x],
                        static_cast<std::size_t>(d.x) * sizeof(T));
}

/// 3x3x3 convolution, zero padded ("same"). w layout: [out][in][dz][dy][dx].
template <typename T>
void conv3_forward(const Volume<T>& x, const T* w, const T* b, Volume<T>& y, std::vector<T>& pad) {
    const Vec3i d = x.dims;
    const int px = d.x + 2, py = d.y + 2;
    for (int o = 0; o < y.ch; ++o) {
        T* yc = y.channel(o);
        for (std::size_t i = 0; i < y.plane(); ++i) yc[i] = b[o];
    }
    for (int i = 0; i < x.ch; ++i) {
        pad_channel(x.channel(i), d, pad);
        for (int o = 0; o < y.ch; ++o) {
            const T* wbase = w + (static_cast<std::size_t>(o) * x.ch + i) * 27;
            T* yc = y.channel(o);
            for (int k = 0; k < 27; ++k) {
                const T wv = wbase[k];
                const int dz = k / 9, dy = (k / 3) % 3, dx = k % 3;
                for (int z = 0; z < d.z; ++z)
                    for (int yy = 0; yy < d.y; ++yy) {
                        const T* srow = &pad[(static_cast<std::size_t>(z + dz) * py + (yy + dy)) * px + dx];
                        T* drow = &yc[(static_cast<std::size_t>(z) * d.y + yy) * d.x];
                        for (int xx = 0; xx < d.x; ++xx) drow[xx] += wv * srow[xx];
                    }
            }
        }
    }
}

/// Backward pass of conv3_forward. Accumulates dW/dB and writes dX.
template <typename T>
void conv3_backward(const Volume<T>& x, const T* w, const Volume<T>& dy, Volume<T>& dx, T* dw, T* db,
                    std::vector<T>& padx, std::vector<T>& padg) {
    const Vec3i d = x.dims;
    const int px = d.x + 2, py = d.y + 2, pz = d.z + 2;
    const std::size_t padsize = static_cast<std::size_t>(px) * py * pz;

    for (int o = 0; o < dy.ch; ++o) {
        const T* g = dy.channel(o);
        T acc{};
        for (std::size_t i = 0; i < dy.plane(); ++i) acc += g[i];
        db[o] += acc;
    }

    for (int i = 0; i < x.ch; ++i) {
        pad_channel(x.channel(i), d, padx);
        padg.assign(padsize, T{});
        for (int o = 0; o < dy.ch; ++o) {
            const T* g = dy.channel(o);
            T* dwbase = dw + (static_cast<std::size_t>(o) * x.ch + i) * 27;
            const T* wbase = w + (static_cast<std::size_t>(o) * x.ch + i) * 27;
            for (int k = 0; k < 27; ++k) {
                const int dz = k / 9, dyk = (k / 3) % 3, dxk = k % 3;
                const T wv = wbase[k];
                T wacc{};
                for (int z = 0; z < d.z; ++z)
                    for (int yy = 0; yy < d.y; ++yy) {
                        const std::size_t poff =
                            (static_cast<std::size_t>(z + dz) * py + (yy + dyk)) * px + dxk;
                        const T* grow = &g[(static_cast<std::size_t>(z) * d.y + yy) * d.x];
                        const T* xrow = &padx[poff];
                        T* prow = &padg[poff];
                        for (int xx = 0; xx < d.x; ++xx) {
                            wacc += grow[xx] * xrow[xx];
                            prow[xx] += wv * grow[xx];
                        }
                    }
                dwbase[k] += wacc;
            }
        }
        // crop padded input-gradient back to dx
        T* dxc = dx.channel(i);
        for (int z = 0; z < d.z; ++z)
            for (int yy = 0; yy < d.y; ++yy)
                std::memcpy(&dxc[(static_cast<std::size_t>(z) * d.y + yy) * d.x],
                            &padg[(static_cast<std::size_t>(z + 1) * py + (yy + 1)) * px + 1],
                            static_cast<std::size_t>(d.x) * sizeof(T));
    }
}

template <typename T>
void conv1_forward(const Volume<T>& x, const T* w, const T* b, Volume<T>& y) {
    for (int o = 0; o < y.ch; ++o) {
        T* yc = y.channel(o);
        for (std::size_t i = 0; i < y.plane(); ++i) yc[i] = b[o];
        for (int c = 0; c < x.ch; ++c) {
            const T wv = w[static_cast<std::size_t>(o) * x.ch + c];
            const T* xc = x.channel(c);
            for (std::size_t i = 0; i < y.plane(); ++i) yc[i] += wv * xc[i];
        }
    }
}

template <typename T>
void conv1_backward(const Volume<T>& x, const T* w, const Volume<T>& dy, Volume<T>& dx, T* dw, T* db) {
    for (int o = 0; o < dy.ch; ++o) {
        const T* g = dy.channel(o);
        T acc{};
        for (std::size_t i = 0; i < dy.plane(); ++i) acc += g[i];
        db[o] += acc;
        for (int c = 0; c < x.ch; ++c) {
            const T* xc = x.channel(c);
            T* dxc = dx.channel(c);
            const T wv = w[static_cast<std::size_t>(o) * x.ch + c];
            T wacc{};
            for (std::size_t i = 0; i < dy.plane(); ++i) {
                wacc += g[i] * xc[i];
                dxc[i] += wv * g[i];
            }
            dw[static_cast<std::size_t>(o) * x.ch + c] += wacc;
        }
    }
}

template <typename T>
void relu_inplace(Volume<T>& x) {
    for (auto& v : x.v)
        if (v < T{}) v = T{};
}

/// dx = dy masked by (activation > 0); activation is the post-ReLU output.
template <typename T>
void relu_backward(const Volume<T>& post, Volume<T>& grad) {
    for (std::size_t i = 0; i < post.v.size(); ++i)
        if (!(post.v[i] > T{})) grad.v[i] = T{};
}

template <typename T>
void maxpool2_forward(const Volume<T>& x, Volume<T>& y, std::vector<std::uint32_t>& argmax) {
    const Vec3i d = x.dims, h{d.x / 2, d.y / 2, d.z / 2};
    argmax.resize(static_cast<std::size_t>(y.ch) * y.plane());
    for (int c = 0; c < x.ch; ++c) {
        const T* xc = x.channel(c);
        T* yc = y.channel(c);
        std::uint32_t* am = argmax.data() + static_cast<std::size_t>(c) * y.plane();
        std::size_t oi = 0;
        for (int z = 0; z < h.z; ++z)
            for (int yy = 0; yy < h.y; ++yy)
                for (int xx = 0; xx < h.x; ++xx, ++oi) {
                    T best{};
                    std::uint32_t bi = 0;
                    bool first = true;
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const std::size_t si =
                                    (static_cast<std::size_t>(2 * z + dz) * d.y + (2 * yy + dy)) * d.x +
                                    (2 * xx + dx);
                                if (first || xc[si] > best) {
                                    best = xc[si];
                                    bi = static_cast<std::uint32_t>(si);
                                    first = false;
                                }
                            }
                    yc[oi] = best;
                    am[oi] = bi;
                }
    }
}

template <typename T>
void maxpool2_backward(const Volume<T>& dy, const std::vector<std::uint32_t>& argmax, Volume<T>& dx) {
    for (auto& v : dx.v) v = T{};
    for (int c = 0; c < dy.ch; ++c) {
        const T* g = dy.channel(c);
        T* dxc = dx.channel(c);
        const std::uint32_t* am = argmax.data() + static_cast<std::size_t>(c) * dy.plane();
        for (std::size_t i = 0; i < dy.plane(); ++i) dxc[am[i]] += g[i];
    }
}

template <typename T>
void upsample2_forward(const Volume<T>& x, Volume<T>& y) {
    const Vec3i d = y.dims;
    for (int c = 0; c < x.ch; ++c) {
        const T* xc = x.channel(c);
        T* yc = y.channel(c);
        std::size_t oi = 0;
        for (int z = 0; z < d.z; ++z)
            for (int yy = 0; yy < d.y; ++yy)
                for (int xx = 0; xx < d.x; ++xx, ++oi)
                    yc[oi] = xc[(static_cast<std::size_t>(z / 2) * x.dims.y + (yy / 2)) * x.dims.x + (xx / 2)];
    }
}

template <typename T>
void upsample2_backward(const Volume<T>& dy, Volume<T>& dx) {
    for (auto& v : dx.v) v = T{};
    const Vec3i d = dy.dims;
    for (int c = 0; c < dy.ch; ++c) {
        const T* g = dy.channel(c);
        T* dxc = dx.channel(c);
        std::size_t oi = 0;
        for (int z = 0; z < d.z; ++z)
            for (int yy = 0; yy < d.y; ++yy)
                for (int xx = 0; xx < d.x; ++xx, ++oi)
                    dxc[(static_cast<std::size_t>(z / 2) * dx.dims.y + (yy / 2)) * dx.dims.x + (xx / 2)] +=
                        g[oi];
    }
}

}  // namespace net_detail

template <typename T = float>
class TinyFcn {
public:
    struct Cache {
        net_detail::Volume<T> x0;                        // normalized 2-channel input
        std::vector<net_detail::Volume<T>> enc;          // post-ReLU encoder activations per level
        std::vector<net_detail::Volume<T>> pooled;       // pooled activations per level
        std::vector<std::vector<std::uint32_t>> argmax;  // pool routing per level
        net_detail::Volume<T> bottom;                    // post-ReLU bottom activation
        std::vector<net_detail::Volume<T>> cat;          // concat inputs per level (decoder)
        std::vector<net_detail::Volume<T>> dec;          // post-ReLU decoder activations per level
        net_detail::Volume<T> s;                         // sigmoid probabilities (1 channel)
        net_detail::Volume<T> head_l, head_c;            // post-ReLU head activations
        std::vector<T> gap_l, gap_c;                     // pooled head features
        double z_l = 0, z_c = 0;                         // dense pre-activations
        Vec3d spacing{1, 1, 1};
        Vec3d origin{0, 0, 0};
    };

    explicit TinyFcn(SegmentorConfig cfg = {}, std::uint64_t seed = 1) : cfg_(cfg) {
        cfg_.validate();
        build_layout();
        params_.assign(total_params_, T{});
        Rng rng(seed);
        // He fan-in initialization for all weights; biases stay zero
        for (const auto& blk : blocks_) {
            const double scale = std::sqrt(2.0 / blk.fan_in);
            for (std::size_t i = 0; i < blk.wcount; ++i)
                params_[blk.w + i] = static_cast<T>(rng.normal(0.0, scale));
        }
    }

    const SegmentorConfig& config() const { return cfg_; }
    std::vector<T>& parameters() { return params_; }
    const std::vector<T>& parameters() const { return params_; }
    std::size_t parameter_count() const { return total_params_; }

    PatchPrediction<T> forward(const Grid3<T>& image, const Grid3<T>& memory, Cache* cache = nullptr) const {
        if (image.dims != cfg_.patch_size || memory.dims != cfg_.patch_size)
            throw std::invalid_argument("TinyFcn: patch dims do not match configured patch_size");
        Cache local;
        Cache& cc = cache ? *cache : local;
        cc.spacing = image.spacing;
        cc.origin = image.origin;

        using net_detail::Volume;
        const int F = cfg_.channels, D = cfg_.depth, H = cfg_.head_width;

        // input assembly: instance-normalized image + raw memory
        cc.x0 = Volume<T>(2, cfg_.patch_size);
        {
            double mean = 0;
            for (T v : image.values) mean += v;
            mean /= static_cast<double>(image.values.size());
            double var = 0;
            for (T v : image.values) var += (v - mean) * (v - mean);
            var /= static_cast<double>(image.values.size());
            const double inv = 1.0 / std::sqrt(var + 1e-6);
            T* img = cc.x0.channel(0);
            for (std::size_t i = 0; i < image.values.size(); ++i)
                img[i] = static_cast<T>((image.values[i] - mean) * inv);
            std::memcpy(cc.x0.channel(1), memory.values.data(), memory.values.size() * sizeof(T));
        }

        std::vector<T> pad;
        cc.enc.resize(D);
        cc.pooled.resize(D);
        cc.argmax.resize(D);

        const Volume<T>* cur = &cc.x0;
        Vec3i dims = cfg_.patch_size;
        for (int l = 0; l < D; ++l) {
            cc.enc[l] = Volume<T>(F, dims);
            net_detail::conv3_forward(*cur, pw(enc_[l]), pb(enc_[l]), cc.enc[l], pad);
            net_detail::relu_inplace(cc.enc[l]);
            dims = {dims.x / 2, dims.y / 2, dims.z / 2};
            cc.pooled[l] = Volume<T>(F, dims);
            net_detail::maxpool2_forward(cc.enc[l], cc.pooled[l], cc.argmax[l]);
            cur = &cc.pooled[l];
        }

        cc.bottom = Volume<T>(F, dims);
        net_detail::conv3_forward(*cur, pw(bot_), pb(bot_), cc.bottom, pad);
        net_detail::relu_inplace(cc.bottom);

        // decoder
        cc.cat.resize(D);
        cc.dec.resize(D);
        const Volume<T>* up_src = &cc.bottom;
        for (int l = D - 1; l >= 0; --l) {
            const Vec3i odims = cc.enc[l].dims;
            cc.cat[l] = Volume<T>(2 * F, odims);
            Volume<T> up(F, odims);
            net_detail::upsample2_forward(*up_src, up);
            std::memcpy(cc.cat[l].channel(0), up.v.data(), up.v.size() * sizeof(T));
            std::memcpy(cc.cat[l].channel(F), cc.enc[l].v.data(), cc.enc[l].v.size() * sizeof(T));
            cc.dec[l] = Volume<T>(F, odims);
            net_detail::conv3_forward(cc.cat[l], pw(dec_[l]), pb(dec_[l]), cc.dec[l], pad);
            net_detail::relu_inplace(cc.dec[l]);
            up_src = &cc.dec[l];
        }

        // segmentation output: 1x1x1 conv + sigmoid
        cc.s = Volume<T>(1, cfg_.patch_size);
        net_detail::conv1_forward(cc.dec[0], pw(outc_), pb(outc_), cc.s);
        for (auto& v : cc.s.v) v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));

        // recognition heads off the compression bottom
        auto run_head = [&](const ParamBlock& conv, const ParamBlock& dense, Volume<T>& act,
                            std::vector<T>& gap, double& z) {
            act = Volume<T>(H, cc.bottom.dims);
            net_detail::conv3_forward(cc.bottom, pw(conv), pb(conv), act, pad);
            net_detail::relu_inplace(act);
            gap.assign(H, T{});
            const double inv = 1.0 / static_cast<double>(act.plane());
            for (int c = 0; c < H; ++c) {
                double acc = 0;
                const T* ac = act.channel(c);
                for (std::size_t i = 0; i < act.plane(); ++i) acc += ac[i];
                gap[c] = static_cast<T>(acc * inv);
            }
            z = static_cast<double>(*pb(dense));
            for (int c = 0; c < H; ++c) z += static_cast<double>(pw(dense)[c]) * gap[c];
        };
        run_head(headl_, densel_, cc.head_l, cc.gap_l, cc.z_l);
        run_head(headc_, densec_, cc.head_c, cc.gap_c, cc.z_c);

        PatchPrediction<T> out;
        out.S = Grid3<T>(cfg_.patch_size, T{}, image.spacing, image.origin);
        std::memcpy(out.S.values.data(), cc.s.channel(0), out.S.values.size() * sizeof(T));
        out.L = std::max(0.0, cc.z_l);
        out.C = 1.0 / (1.0 + std::exp(-cc.z_c));
        return out;
    }

    /// Interface contract used by the traversal engine. A trained model is
    /// specific to one traversal direction; the parameter is part of the
    /// call signature only.
    PatchPrediction<T> predict(const Grid3<T>& image, const Grid3<T>& memory, Direction) const {
        return forward(image, memory);
    }

    /// Backpropagates (dS, dL, dC) — the loss gradients w.r.t. the forward
    /// outputs — into parameter gradients, accumulated into `grad`.
    /// Not const: reuses member scratch, so calls must be serialized.
    void backward(const Cache& cc, const Grid3<T>& dS, double dL, double dC, std::vector<T>& grad) {
        if (grad.size() != total_params_) grad.assign(total_params_, T{});
        using net_detail::Volume;
        const int F = cfg_.channels, D = cfg_.depth, H = cfg_.head_width;
        std::vector<T> padx, padg;

        // segmentation output: sigmoid fused
        Volume<T> dlogits(1, cfg_.patch_size);
        for (std::size_t i = 0; i < dlogits.v.size(); ++i) {
            const T s = cc.s.v[i];
            dlogits.v[i] = static_cast<T>(dS.values[i] * s * (T{1} - s));
        }
        Volume<T> ddec0(F, cfg_.patch_size);
        net_detail::conv1_backward(cc.dec[0], pw(outc_), dlogits, ddec0, gw(grad, outc_), gb(grad, outc_));

        // recognition heads: dz through the dense layer, GAP, conv, ReLU
        Volume<T> dbottom(F, cc.bottom.dims);
        for (auto& v : dbottom.v) v = T{};
        auto head_backward = [&](const ParamBlock& conv, const ParamBlock& dense, const Volume<T>& act,
                                 const std::vector<T>& gap, double dz) {
            T* dwd = gw(grad, dense);
            T* dbd = gb(grad, dense);
            *dbd += static_cast<T>(dz);
            Volume<T> dact(H, act.dims);
            const double inv = 1.0 / static_cast<double>(act.plane());
            for (int c = 0; c < H; ++c) {
                dwd[c] += static_cast<T>(dz * gap[c]);
                const T dg = static_cast<T>(dz * static_cast<double>(pw(dense)[c]) * inv);
                T* dc = dact.channel(c);
                for (std::size_t i = 0; i < act.plane(); ++i) dc[i] = dg;
            }
            net_detail::relu_backward(act, dact);
            Volume<T> din(F, cc.bottom.dims);
            net_detail::conv3_backward(cc.bottom, pw(conv), dact, din, gw(grad, conv), gb(grad, conv), padx,
                                       padg);
            for (std::size_t i = 0; i < dbottom.v.size(); ++i) dbottom.v[i] += din.v[i];
        };
        // L head: ReLU on the dense output
        head_backward(headl_, densel_, cc.head_l, cc.gap_l, cc.z_l > 0 ? dL : 0.0);
        // C head: sigmoid on the dense output, fused
        {
            const double pc = 1.0 / (1.0 + std::exp(-cc.z_c));
            head_backward(headc_, densec_, cc.head_c, cc.gap_c, dC * pc * (1.0 - pc));
        }

        // decoder chain (level 0 upward), accumulating into the bottom
        Volume<T> dcur = std::move(ddec0);
        for (int l = 0; l < D; ++l) {
            net_detail::relu_backward(cc.dec[l], dcur);
            Volume<T> dcat(2 * F, cc.cat[l].dims);
            net_detail::conv3_backward(cc.cat[l], pw(dec_[l]), dcur, dcat, gw(grad, dec_[l]),
                                       gb(grad, dec_[l]), padx, padg);
            // split: first F channels flow through the upsample, rest to the skip
            Volume<T> dup(F, cc.cat[l].dims);
            std::memcpy(dup.v.data(), dcat.channel(0), dup.v.size() * sizeof(T));
            Volume<T>& denc_skip = denc_buf_[l];
            denc_skip = Volume<T>(F, cc.enc[l].dims);
            std::memcpy(denc_skip.v.data(), dcat.channel(F), denc_skip.v.size() * sizeof(T));

            const Vec3i lower = (l + 1 < D) ? cc.dec[l + 1].dims : cc.bottom.dims;
            Volume<T> dlower(F, lower);
            net_detail::upsample2_backward(dup, dlower);
            if (l + 1 < D)
                dcur = std::move(dlower);
            else
                for (std::size_t i = 0; i < dbottom.v.size(); ++i) dbottom.v[i] += dlower.v[i];
        }

        // bottom conv
        net_detail::relu_backward(cc.bottom, dbottom);
        Volume<T> dpooled(F, cc.pooled[D - 1].dims);
        net_detail::conv3_backward(cc.pooled[D - 1], pw(bot_), dbottom, dpooled, gw(grad, bot_),
                                   gb(grad, bot_), padx, padg);

        // encoder chain (deepest level back to the input)
        for (int l = D - 1; l >= 0; --l) {
            Volume<T> denc(cc.enc[l].ch, cc.enc[l].dims);
            net_detail::maxpool2_backward(dpooled, cc.argmax[l], denc);
            for (std::size_t i = 0; i < denc.v.size(); ++i) denc.v[i] += denc_buf_[l].v[i];
            net_detail::relu_backward(cc.enc[l], denc);
            const net_detail::Volume<T>& below = (l == 0) ? cc.x0 : cc.pooled[l - 1];
            Volume<T> dbelow(below.ch, below.dims);
            net_detail::conv3_backward(below, pw(enc_[l]), denc, dbelow, gw(grad, enc_[l]),
                                       gb(grad, enc_[l]), padx, padg);
            if (l > 0) dpooled = std::move(dbelow);
            // l == 0: gradient w.r.t. the input is discarded (normalization is preprocessing)
        }
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("TinyFcn: cannot open '" + path + "' for writing");
        out.write("ITSEGNET", 8);
        auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
        put_u32(1);  // version
        put_u32(static_cast<std::uint32_t>(cfg_.channels));
        put_u32(static_cast<std::uint32_t>(cfg_.depth));
        put_u32(static_cast<std::uint32_t>(cfg_.head_width));
        put_u32(static_cast<std::uint32_t>(cfg_.patch_size.x));
        put_u32(static_cast<std::uint32_t>(cfg_.patch_size.y));
        put_u32(static_cast<std::uint32_t>(cfg_.patch_size.z));
        const std::uint64_t n = total_params_;
        out.write(reinterpret_cast<const char*>(&n), 8);
        for (T p : params_) {
            const float f = static_cast<float>(p);
            out.write(reinterpret_cast<const char*>(&f), 4);
        }
        if (!out) throw std::runtime_error("TinyFcn: write failed for '" + path + "'");
    }

    static TinyFcn load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("TinyFcn: cannot open model file '" + path + "'");
        char magic[8];
        in.read(magic, 8);
        if (in.gcount() != 8 || std::memcmp(magic, "ITSEGNET", 8) != 0)
            throw std::runtime_error("TinyFcn: '" + path + "' is not a network parameter file");
        auto get_u32 = [&] {
            std::uint32_t v = 0;
            in.read(reinterpret_cast<char*>(&v), 4);
            return v;
        };
        const std::uint32_t version = get_u32();
        if (version != 1) throw std::runtime_error("TinyFcn: unsupported model version");
        SegmentorConfig cfg;
        cfg.channels = static_cast<int>(get_u32());
        cfg.depth = static_cast<int>(get_u32());
        cfg.head_width = static_cast<int>(get_u32());
        cfg.patch_size.x = static_cast<int>(get_u32());
        cfg.patch_size.y = static_cast<int>(get_u32());
        cfg.patch_size.z = static_cast<int>(get_u32());
        std::uint64_t n = 0;
        in.read(reinterpret_cast<char*>(&n), 8);
        TinyFcn net(cfg, 0);
        if (n != net.total_params_) throw std::runtime_error("TinyFcn: parameter count mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            float f = 0;
            in.read(reinterpret_cast<char*>(&f), 4);
            net.params_[i] = static_cast<T>(f);
        }
        if (!in) throw std::runtime_error("TinyFcn: model file '" + path + "' is truncated");
        return net;
    }

private:
    struct ParamBlock {
        std::size_t w = 0;       // offset of weights
        std::size_t wcount = 0;  // number of weights
        std::size_t b = 0;       // offset of biases
        std::size_t bcount = 0;
        double fan_in = 1;
    };

    const T* pw(const ParamBlock& blk) const { return params_.data() + blk.w; }
    const T* pb(const ParamBlock& blk) const { return params_.data() + blk.b; }
    static T* gw(std::vector<T>& g, const ParamBlock& blk) { return g.data() + blk.w; }
    static T* gb(std::vector<T>& g, const ParamBlock& blk) { return g.data() + blk.b; }

    ParamBlock add_block(std::size_t wcount, std::size_t bcount, double fan_in) {
        ParamBlock blk;
        blk.w = total_params_;
        blk.wcount = wcount;
        total_params_ += wcount;
        blk.b = total_params_;
        blk.bcount = bcount;
        total_params_ += bcount;
        blk.fan_in = fan_in;
        blocks_.push_back(blk);
        return blk;
    }

    void build_layout() {
        const int F = cfg_.channels, D = cfg_.depth, H = cfg_.head_width;
        total_params_ = 0;
        blocks_.clear();
        enc_.clear();
        dec_.clear();
        for (int l = 0; l < D; ++l) {
            const int in_ch = (l == 0) ? 2 : F;
            enc_.push_back(add_block(static_cast<std::size_t>(F) * in_ch * 27, F, in_ch * 27.0));
        }
        bot_ = add_block(static_cast<std::size_t>(F) * F * 27, F, F * 27.0);
        dec_.resize(D);
        for (int l = D - 1; l >= 0; --l)
            dec_[l] = add_block(static_cast<std::size_t>(F) * 2 * F * 27, F, 2.0 * F * 27.0);
        outc_ = add_block(static_cast<std::size_t>(F), 1, static_cast<double>(F));
        headl_ = add_block(static_cast<std::size_t>(H) * F * 27, H, F * 27.0);
        headc_ = add_block(static_cast<std::size_t>(H) * F * 27, H, F * 27.0);
        densel_ = add_block(static_cast<std::size_t>(H), 1, static_cast<double>(H));
        densec_ = add_block(static_cast<std::size_t>(H), 1, static_cast<double>(H));
        denc_buf_.resize(D);
    }

    SegmentorConfig cfg_;
    std::vector<T> params_;
    std::size_t total_params_ = 0;
    std::vector<ParamBlock> blocks_;
    std::vector<ParamBlock> enc_, dec_;
    ParamBlock bot_, outc_, headl_, headc_, densel_, densec_;
    std::vector<net_detail::Volume<T>> denc_buf_;  // skip gradients parked between phases
};

}  // namespace iterseg
