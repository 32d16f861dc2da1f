#pragma once

#include <cblas.h>

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "densedet/common.hpp"
#include "densedet/image_io.hpp"
#include "densedet/tensor.hpp"

namespace densedet {

struct GridGeometry {
    int image_size = 256;
    int stride = 8;
    int grid() const { return image_size / stride; }
};

// Head output of one image: channel-planar tensor [nc + 4*nbins, G, G].
// Channels 0..nc-1 are class logits; the rest are per-side bin logits,
// side-major (left, top, right, bottom).
struct PredictionGrid {
    int G = 0;
    int nc = 0;
    int nbins = 0;
    Tensor head;

    float cls(int i, int j, int c) const { return head.at(c, i, j); }
    float box(int i, int j, int side, int bin) const {
        return head.at(nc + side * nbins + bin, i, j);
    }
    float sigmoid_cls(int i, int j, int c) const {
        return 1.0f / (1.0f + std::exp(-cls(i, j, c)));
    }
};

namespace nn {

inline void im2col(const float* in, int C, int H, int W, int k, int stride, int pad, float* col,
                   int Ho, int Wo) {
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                float* dst = col + ((size_t(c) * k + ky) * k + kx) * Ho * Wo;
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst + size_t(oy) * Wo, dst + size_t(oy + 1) * Wo, 0.0f);
                        continue;
                    }
                    const float* src = in + (size_t(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * stride + kx - pad;
                        dst[size_t(oy) * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

inline void col2im(const float* col, int C, int H, int W, int k, int stride, int pad, float* in,
                   int Ho, int Wo) {
    std::fill(in, in + size_t(C) * H * W, 0.0f);
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* src = col + ((size_t(c) * k + ky) * k + kx) * Ho * Wo;
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    float* dst = in + (size_t(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < W) dst[ix] += src[size_t(oy) * Wo + ox];
                    }
                }
            }
        }
    }
}

struct Conv2d {
    std::string name;
    int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
    Tensor w;   // [out_c, in_c*k*k]
    Tensor b;   // [out_c]
    Tensor gw;  // same shapes as w/b
    Tensor gb;

    void init(const std::string& name_, int in_c_, int out_c_, int k_, int stride_, int pad_,
              RngStream& rng, bool zero_init) {
        name = name_;
        in_c = in_c_;
        out_c = out_c_;
        k = k_;
        stride = stride_;
        pad = pad_;
        w = Tensor({out_c, in_c * k * k});
        b = Tensor({out_c});
        gw = Tensor(w.shape());
        gb = Tensor(b.shape());
        if (!zero_init) {
            float std = std::sqrt(2.0f / float(in_c * k * k));
            for (size_t i = 0; i < w.numel(); ++i) w[i] = float(rng.normal()) * std;
        }
    }

    int out_h(int H) const { return (H + 2 * pad - k) / stride + 1; }

    // out: [out_c, Ho, Wo]; col scratch must hold in_c*k*k*Ho*Wo floats
    void forward(const float* in, int H, int W, float* out, float* col) const {
        int Ho = out_h(H), Wo = out_h(W);
        im2col(in, in_c, H, W, k, stride, pad, col, Ho, Wo);
        int hw = Ho * Wo, kk = in_c * k * k;
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_c, hw, kk, 1.0f, w.data(), kk,
                    col, hw, 0.0f, out, hw);
        for (int oc = 0; oc < out_c; ++oc) {
            float bias = b[size_t(oc)];
            float* row = out + size_t(oc) * hw;
            for (int i = 0; i < hw; ++i) row[i] += bias;
        }
    }

    // accumulates gw/gb; writes dIn (may be null for the first layer)
    void backward(const float* in, int H, int W, const float* dOut, float* dIn, float* col,
                  float* dcol) {
        int Ho = out_h(H), Wo = out_h(W);
        int hw = Ho * Wo, kk = in_c * k * k;
        im2col(in, in_c, H, W, k, stride, pad, col, Ho, Wo);
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_c, kk, hw, 1.0f, dOut, hw, col,
                    hw, 1.0f, gw.data(), kk);
        for (int oc = 0; oc < out_c; ++oc) {
            const float* row = dOut + size_t(oc) * hw;
            float s = 0;
            for (int i = 0; i < hw; ++i) s += row[i];
            gb[size_t(oc)] += s;
        }
        if (dIn) {
            cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kk, hw, out_c, 1.0f, w.data(),
                        kk, dOut, hw, 0.0f, dcol, hw);
            col2im(dcol, in_c, H, W, k, stride, pad, dIn, Ho, Wo);
        }
    }
};

}  // namespace nn

// Per-image forward activations kept for the backward pass.
struct Activations {
    Tensor input;            // [3, H, W]
    std::vector<Tensor> out; // post-ReLU output of each backbone layer
    Tensor head;             // [nc+4B, G, G]
};

// Minimal anchor-free detector: six-layer conv stack down to stride 8,
// 1x1 head emitting class logits and per-side bin-distribution logits.
// The head is zero-initialized.
class DetectorNet {
public:
    static constexpr int kStride = 8;

    DetectorNet() = default;
    DetectorNet(int num_classes, int nbins, uint64_t seed) : nc_(num_classes), nbins_(nbins) {
        RngStream rng(seed, 0xde7ec70ULL);
        layers_.resize(6);
        layers_[0].init("conv1", 3, 12, 3, 2, 1, rng, false);
        layers_[1].init("conv2", 12, 24, 3, 2, 1, rng, false);
        layers_[2].init("conv3", 24, 48, 3, 2, 1, rng, false);
        layers_[3].init("conv4", 48, 48, 3, 1, 1, rng, false);
        layers_[4].init("conv5", 48, 48, 3, 1, 1, rng, false);
        layers_[5].init("head", 48, num_classes + 4 * nbins, 1, 1, 0, rng, true);
    }

    int num_classes() const { return nc_; }
    int nbins() const { return nbins_; }

    static Tensor image_to_input(const ImageF32& img) {
        Tensor t({3, img.height, img.width});
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) t.at(c, y, x) = img.at(y, x, c);
        return t;
    }

    PredictionGrid forward(const Tensor& input, Activations* acts = nullptr) const {
        int H = input.dim(1), W = input.dim(2);
        if (input.dim(0) != 3 || H % kStride != 0 || W != H)
            throw RuntimeError("input must be square [3,H,H] with H divisible by stride");
        ensure_scratch(H);

        Activations local;
        Activations& a = acts ? *acts : local;
        a.input = input;
        a.out.resize(5);

        const Tensor* cur = &a.input;
        int h = H;
        for (int l = 0; l < 5; ++l) {
            int ho = layers_[size_t(l)].out_h(h);
            a.out[size_t(l)] = Tensor({layers_[size_t(l)].out_c, ho, ho});
            layers_[size_t(l)].forward(cur->data(), h, h, a.out[size_t(l)].data(), col_.data());
            for (size_t i = 0; i < a.out[size_t(l)].numel(); ++i)
                if (a.out[size_t(l)][i] < 0) a.out[size_t(l)][i] = 0;
            cur = &a.out[size_t(l)];
            h = ho;
        }
        a.head = Tensor({nc_ + 4 * nbins_, h, h});
        layers_[5].forward(cur->data(), h, h, a.head.data(), col_.data());

        PredictionGrid grid;
        grid.G = h;
        grid.nc = nc_;
        grid.nbins = nbins_;
        grid.head = a.head;
        return grid;
    }

    // dHead: [nc+4B, G, G] gradient of the loss w.r.t. head outputs.
    void backward(const Activations& a, const Tensor& dHead) {
        int H = a.input.dim(1);
        ensure_scratch(H);
        int G = a.head.dim(1);

        Tensor d_cur = dHead;
        // head backward
        Tensor d5(a.out[4].shape());
        layers_[5].backward(a.out[4].data(), G, G, d_cur.data(), d5.data(), col_.data(),
                            dcol_.data());
        d_cur = std::move(d5);
        for (int l = 4; l >= 0; --l) {
            // ReLU gate
            for (size_t i = 0; i < d_cur.numel(); ++i)
                if (a.out[size_t(l)][i] <= 0) d_cur[i] = 0;
            const Tensor& in = (l == 0) ? a.input : a.out[size_t(l - 1)];
            int h_in = in.dim(1);
            Tensor d_in;
            float* d_in_ptr = nullptr;
            if (l > 0) {
                d_in = Tensor(in.shape());
                d_in_ptr = d_in.data();
            }
            layers_[size_t(l)].backward(in.data(), h_in, h_in, d_cur.data(), d_in_ptr,
                                        col_.data(), dcol_.data());
            if (l > 0) d_cur = std::move(d_in);
        }
    }

    void zero_grad() {
        for (auto& l : layers_) {
            l.gw.fill(0);
            l.gb.fill(0);
        }
    }

    struct Param {
        std::string name;
        Tensor* value;
        Tensor* grad;
        bool decay;  // weight decay applies
    };

    std::vector<Param> params() {
        std::vector<Param> out;
        for (auto& l : layers_) {
            out.push_back({l.name + ".w", &l.w, &l.gw, true});
            out.push_back({l.name + ".b", &l.b, &l.gb, false});
        }
        return out;
    }

    // Self-describing checkpoint: JSON header (layer shapes + metadata)
    // followed by raw little-endian float32 data. Round-trips bit-exactly.
    void save(const std::string& path, const std::map<std::string, std::string>& meta) const {
        nlohmann::json hdr;
        hdr["format"] = "densedet-ckpt-v1";
        hdr["num_classes"] = nc_;
        hdr["nbins"] = nbins_;
        hdr["meta"] = meta;
        hdr["tensors"] = nlohmann::json::array();
        size_t offset = 0;
        auto add = [&](const std::string& name, const Tensor& t) {
            hdr["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
            offset += t.numel() * sizeof(float);
        };
        for (const auto& l : layers_) {
            add(l.name + ".w", l.w);
            add(l.name + ".b", l.b);
        }
        std::string hs = hdr.dump();
        std::ofstream f(path, std::ios::binary);
        if (!f) throw RuntimeError("cannot write checkpoint: " + path);
        uint64_t len = hs.size();
        f.write("DDETCKPT", 8);
        f.write(reinterpret_cast<const char*>(&len), 8);
        f.write(hs.data(), std::streamsize(hs.size()));
        for (const auto& l : layers_) {
            f.write(reinterpret_cast<const char*>(l.w.data()),
                    std::streamsize(l.w.numel() * sizeof(float)));
            f.write(reinterpret_cast<const char*>(l.b.data()),
                    std::streamsize(l.b.numel() * sizeof(float)));
        }
    }

    static DetectorNet load(const std::string& path, std::map<std::string, std::string>* meta = nullptr) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw RuntimeError("cannot read checkpoint: " + path);
        char magic[8];
        f.read(magic, 8);
        if (std::string(magic, 8) != "DDETCKPT") throw RuntimeError("bad checkpoint magic: " + path);
        uint64_t len = 0;
        f.read(reinterpret_cast<char*>(&len), 8);
        std::string hs(len, '\0');
        f.read(hs.data(), std::streamsize(len));
        nlohmann::json hdr = nlohmann::json::parse(hs);
        DetectorNet net(hdr["num_classes"].get<int>(), hdr["nbins"].get<int>(), 0);
        if (meta)
            for (auto& [k, v] : hdr["meta"].items()) (*meta)[k] = v.get<std::string>();
        for (auto& l : net.layers_) {
            f.read(reinterpret_cast<char*>(l.w.data()),
                   std::streamsize(l.w.numel() * sizeof(float)));
            f.read(reinterpret_cast<char*>(l.b.data()),
                   std::streamsize(l.b.numel() * sizeof(float)));
        }
        if (!f) throw RuntimeError("truncated checkpoint: " + path);
        return net;
    }

    std::vector<nn::Conv2d>& layers() { return layers_; }

private:
    void ensure_scratch(int H) const {
        // largest im2col buffer across layers (conv1 at H/2 output)
        size_t need = 0;
        int h = H;
        for (const auto& l : layers_) {
            int ho = l.out_h(h);
            need = std::max(need, size_t(l.in_c) * l.k * l.k * ho * ho);
            h = ho;
        }
        if (col_.size() < need) {
            col_.resize(need);
            dcol_.resize(need);
        }
    }

    int nc_ = 0;
    int nbins_ = 16;
    std::vector<nn::Conv2d> layers_;
    mutable std::vector<float> col_, dcol_;
};

// Decoupled-weight-decay adaptive-moment optimizer.
class AdamW {
public:
    AdamW(double lr, double weight_decay = 0.01, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8)
        : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(std::vector<DetectorNet::Param>& params) {
        if (m_.empty()) {
            for (auto& p : params) {
                m_.emplace_back(p.value->shape());
                v_.emplace_back(p.value->shape());
            }
        }
        ++t_;
        double bc1 = 1.0 - std::pow(b1_, t_);
        double bc2 = 1.0 - std::pow(b2_, t_);
        for (size_t pi = 0; pi < params.size(); ++pi) {
            Tensor& w = *params[pi].value;
            const Tensor& g = *params[pi].grad;
            Tensor& m = m_[pi];
            Tensor& v = v_[pi];
            for (size_t i = 0; i < w.numel(); ++i) {
                m[i] = float(b1_ * m[i] + (1.0 - b1_) * g[i]);
                v[i] = float(b2_ * v[i] + (1.0 - b2_) * double(g[i]) * g[i]);
                double mhat = m[i] / bc1;
                double vhat = v[i] / bc2;
                double upd = mhat / (std::sqrt(vhat) + eps_);
                if (params[pi].decay) upd += wd_ * w[i];
                w[i] = float(w[i] - lr_ * upd);
            }
        }
    }

    double lr() const { return lr_; }

private:
    double lr_, wd_, b1_, b2_, eps_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace densedet
