#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "triggerlab/detail/gemm.hpp"
#include "triggerlab/image.hpp"
#include "triggerlab/rng.hpp"
#include "triggerlab/transforms.hpp"

namespace triggerlab {

// Fixed topology, parameterized sizes:
//   conv 3x3 (stride 1, pad 1) -> ReLU -> 2x2 maxpool
//   conv 3x3 (stride 1, pad 1) -> ReLU -> 2x2 maxpool
//   flatten -> dense -> ReLU -> dense num_classes
struct Architecture {
    int in_channels = 1;
    int in_height = 28;
    int in_width = 28;
    int num_classes = 10;
    int conv1_filters = 32;
    int conv2_filters = 64;
    int dense_units = 128;

    int pool1_h() const { return in_height / 2; }
    int pool1_w() const { return in_width / 2; }
    int pool2_h() const { return in_height / 4; }
    int pool2_w() const { return in_width / 4; }
    int flat_size() const { return conv2_filters * pool2_h() * pool2_w(); }

    void validate() const {
        if (in_channels != 1 && in_channels != 3)
            throw std::invalid_argument("Architecture: in_channels must be 1 or 3");
        if (in_height < 4 || in_width < 4 || in_height % 4 != 0 || in_width % 4 != 0)
            throw std::invalid_argument("Architecture: input sides must be positive multiples of 4");
        if (num_classes < 2) throw std::invalid_argument("Architecture: num_classes must be >= 2");
        if (conv1_filters < 1 || conv2_filters < 1 || dense_units < 1)
            throw std::invalid_argument("Architecture: layer sizes must be >= 1");
    }

    std::string descriptor() const {
        std::ostringstream s;
        s << "smallcnn in=" << in_channels << "x" << in_height << "x" << in_width
          << " conv=" << conv1_filters << "," << conv2_filters << " dense=" << dense_units
          << " classes=" << num_classes;
        return s.str();
    }

    bool operator==(const Architecture&) const = default;
};

inline Architecture parse_architecture(const std::string& text) {
    Architecture a;
    char xa = 0, xb = 0, comma = 0;
    const int got = std::sscanf(text.c_str(),
                                "smallcnn in=%d%c%d%c%d conv=%d%c%d dense=%d classes=%d",
                                &a.in_channels, &xa, &a.in_height, &xb, &a.in_width,
                                &a.conv1_filters, &comma, &a.conv2_filters, &a.dense_units,
                                &a.num_classes);
    if (got != 10 || xa != 'x' || xb != 'x' || comma != ',')
        throw std::invalid_argument("unrecognized architecture descriptor: " + text);
    a.validate();
    return a;
}

// Flat parameter offsets. Storage order: conv1 W,b, conv2 W,b, dense1 W,b,
// dense2 W,b. Conv weights are [filters][in][3][3]; dense weights [out][in].
struct ParamLayout {
    std::size_t conv1_w = 0, conv1_b = 0;
    std::size_t conv2_w = 0, conv2_b = 0;
    std::size_t fc1_w = 0, fc1_b = 0;
    std::size_t fc2_w = 0, fc2_b = 0;
    std::size_t total = 0;

    explicit ParamLayout(const Architecture& a) {
        std::size_t off = 0;
        conv1_w = off; off += static_cast<std::size_t>(a.conv1_filters) * a.in_channels * 9;
        conv1_b = off; off += a.conv1_filters;
        conv2_w = off; off += static_cast<std::size_t>(a.conv2_filters) * a.conv1_filters * 9;
        conv2_b = off; off += a.conv2_filters;
        fc1_w = off; off += static_cast<std::size_t>(a.dense_units) * a.flat_size();
        fc1_b = off; off += a.dense_units;
        fc2_w = off; off += static_cast<std::size_t>(a.num_classes) * a.dense_units;
        fc2_b = off; off += a.num_classes;
        total = off;
    }
};

template <class T>
struct Network {
    Architecture arch;
    std::vector<T> weights;

    ParamLayout layout() const { return ParamLayout(arch); }
};

/// Fresh model with fan-in-scaled uniform weight noise, U(-1/sqrt(fan_in),
/// +1/sqrt(fan_in)) drawn in storage order, and zero biases.
template <class T = float>
Network<T> new_model(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    Network<T> net;
    net.arch = arch;
    const ParamLayout lay(arch);
    net.weights.assign(lay.total, T(0));
    Rng rng(seed);
    auto fill = [&](std::size_t off, std::size_t count, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < count; ++i)
            net.weights[off + i] = static_cast<T>(rng.uniform(-bound, bound));
    };
    fill(lay.conv1_w, static_cast<std::size_t>(arch.conv1_filters) * arch.in_channels * 9,
         arch.in_channels * 9);
    fill(lay.conv2_w, static_cast<std::size_t>(arch.conv2_filters) * arch.conv1_filters * 9,
         arch.conv1_filters * 9);
    fill(lay.fc1_w, static_cast<std::size_t>(arch.dense_units) * arch.flat_size(),
         arch.flat_size());
    fill(lay.fc2_w, static_cast<std::size_t>(arch.num_classes) * arch.dense_units,
         arch.dense_units);
    return net;
}

namespace detail {

// col[(c*9 + ky*3 + kx)][y*W + x] = in[c][y+ky-1][x+kx-1], zero outside.
template <class T>
void im2col3x3(const T* in, int C, int H, int W, T* col) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < C; ++c) {
        const T* src = in + static_cast<std::size_t>(c) * plane;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* dst = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * plane;
                const int dx = kx - 1;
                const int lo = dx < 0 ? 1 : 0;
                const int hi = dx > 0 ? W - 1 : W;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + ky - 1;
                    T* drow = dst + static_cast<std::size_t>(y) * W;
                    if (sy < 0 || sy >= H) {
                        std::memset(drow, 0, sizeof(T) * W);
                        continue;
                    }
                    const T* srow = src + static_cast<std::size_t>(sy) * W;
                    if (lo) drow[0] = T(0);
                    if (hi < W) drow[W - 1] = T(0);
                    std::memcpy(drow + lo, srow + lo + dx, sizeof(T) * (hi - lo));
                }
            }
        }
    }
}

// colT[y*W + x][c*9 + ky*3 + kx]: the transpose of im2col3x3, filled directly.
template <class T>
void im2colT3x3(const T* in, int C, int H, int W, T* colT) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const int K = C * 9;
    for (int c = 0; c < C; ++c) {
        const T* src = in + static_cast<std::size_t>(c) * plane;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* dst = colT + c * 9 + ky * 3 + kx;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + ky - 1;
                    for (int x = 0; x < W; ++x) {
                        const int sx = x + kx - 1;
                        const bool in_bounds = sy >= 0 && sy < H && sx >= 0 && sx < W;
                        dst[(static_cast<std::size_t>(y) * W + x) * K] =
                            in_bounds ? src[static_cast<std::size_t>(sy) * W + sx] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-add of a column-space gradient back to image space (pad 1).
template <class T>
void col2im3x3(const T* dcol, int C, int H, int W, T* dx) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::memset(dx, 0, sizeof(T) * C * plane);
    for (int c = 0; c < C; ++c) {
        T* dst = dx + static_cast<std::size_t>(c) * plane;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* src = dcol + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * plane;
                const int dxoff = kx - 1;
                const int lo = dxoff < 0 ? 1 : 0;
                const int hi = dxoff > 0 ? W - 1 : W;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= H) continue;
                    T* drow = dst + static_cast<std::size_t>(sy) * W + lo + dxoff;
                    const T* srow = src + static_cast<std::size_t>(y) * W + lo;
                    for (int x = 0; x < hi - lo; ++x) drow[x] += srow[x];
                }
            }
        }
    }
}

template <class T>
void add_bias_relu(T* out, const T* bias, int channels, int plane) {
    for (int c = 0; c < channels; ++c) {
        const T b = bias[c];
        T* row = out + static_cast<std::size_t>(c) * plane;
        for (int i = 0; i < plane; ++i) {
            const T v = row[i] + b;
            row[i] = v > T(0) ? v : T(0);
        }
    }
}

// 2x2 max pooling with stored argmax (0..3, first maximum wins).
template <class T>
void maxpool2x2(const T* in, int C, int H, int W, T* out, std::uint8_t* idx) {
    const int h2 = H / 2, w2 = W / 2;
    for (int c = 0; c < C; ++c) {
        const T* plane = in + static_cast<std::size_t>(c) * H * W;
        T* oplane = out + static_cast<std::size_t>(c) * h2 * w2;
        std::uint8_t* iplane = idx + static_cast<std::size_t>(c) * h2 * w2;
        for (int y = 0; y < h2; ++y) {
            for (int x = 0; x < w2; ++x) {
                const T* p = plane + static_cast<std::size_t>(2 * y) * W + 2 * x;
                T best = p[0];
                std::uint8_t bi = 0;
                if (p[1] > best) { best = p[1]; bi = 1; }
                if (p[W] > best) { best = p[W]; bi = 2; }
                if (p[W + 1] > best) { best = p[W + 1]; bi = 3; }
                oplane[static_cast<std::size_t>(y) * w2 + x] = best;
                iplane[static_cast<std::size_t>(y) * w2 + x] = bi;
            }
        }
    }
}

template <class T>
void maxpool2x2_backward(const T* dout, const std::uint8_t* idx, int C, int H, int W, T* din) {
    const int h2 = H / 2, w2 = W / 2;
    std::memset(din, 0, sizeof(T) * C * H * W);
    for (int c = 0; c < C; ++c) {
        const T* dplane = dout + static_cast<std::size_t>(c) * h2 * w2;
        const std::uint8_t* iplane = idx + static_cast<std::size_t>(c) * h2 * w2;
        T* oplane = din + static_cast<std::size_t>(c) * H * W;
        for (int y = 0; y < h2; ++y) {
            for (int x = 0; x < w2; ++x) {
                const std::uint8_t bi = iplane[static_cast<std::size_t>(y) * w2 + x];
                const int sy = 2 * y + (bi >> 1), sx = 2 * x + (bi & 1);
                oplane[static_cast<std::size_t>(sy) * W + sx] +=
                    dplane[static_cast<std::size_t>(y) * w2 + x];
            }
        }
    }
}

}  // namespace detail

// Scratch buffers for batched forward/backward. Sized once for a batch
// capacity; reusable across batches and (read-only) evaluations.
template <class T>
struct Workspace {
    Architecture arch;
    int capacity = 0;

    std::vector<T> xbuf;                // [B][C*H*W], unit-interval inputs
    std::vector<T> a1;                  // [B][F1*H*W] post-ReLU
    std::vector<T> p1;                  // [B][F1*h1*w1]
    std::vector<std::uint8_t> idx1;
    std::vector<T> a2;                  // [B][F2*h1*w1] post-ReLU
    std::vector<T> p2;                  // [B][flat]
    std::vector<std::uint8_t> idx2;
    std::vector<T> fc1_out;             // [B][D] post-ReLU
    std::vector<T> logits;              // [B][K]
    std::vector<T> probs;               // [B][K]

    std::vector<T> col, colT;           // per-image column scratch
    std::vector<T> fc1_wT, fc2_wT, conv2_wT;
    std::vector<T> dlogits, dfc1, dflat;
    std::vector<T> da2, dcol2, dp1, da1;
    std::vector<T> dyT;

    Workspace(const Architecture& a, int batch_capacity) : arch(a), capacity(batch_capacity) {
        const std::size_t B = capacity;
        const std::size_t in_sz = static_cast<std::size_t>(a.in_channels) * a.in_height * a.in_width;
        const std::size_t hw = static_cast<std::size_t>(a.in_height) * a.in_width;
        const std::size_t p1hw = static_cast<std::size_t>(a.pool1_h()) * a.pool1_w();
        xbuf.resize(B * in_sz);
        a1.resize(B * a.conv1_filters * hw);
        p1.resize(B * a.conv1_filters * p1hw);
        idx1.resize(B * a.conv1_filters * p1hw);
        a2.resize(B * a.conv2_filters * p1hw);
        p2.resize(B * a.flat_size());
        idx2.resize(B * a.flat_size());
        fc1_out.resize(B * a.dense_units);
        logits.resize(B * a.num_classes);
        probs.resize(B * a.num_classes);

        const std::size_t col1_sz = static_cast<std::size_t>(a.in_channels) * 9 * hw;
        const std::size_t col2_sz = static_cast<std::size_t>(a.conv1_filters) * 9 * p1hw;
        col.resize(std::max(col1_sz, col2_sz));
        colT.resize(std::max(col1_sz, col2_sz));
        fc1_wT.resize(static_cast<std::size_t>(a.flat_size()) * a.dense_units);
        fc2_wT.resize(static_cast<std::size_t>(a.dense_units) * a.num_classes);
        conv2_wT.resize(static_cast<std::size_t>(a.conv1_filters) * 9 * a.conv2_filters);
        dlogits.resize(B * a.num_classes);
        dfc1.resize(B * a.dense_units);
        dflat.resize(B * a.flat_size());
        da2.resize(static_cast<std::size_t>(a.conv2_filters) * p1hw);
        dcol2.resize(col2_sz);
        dp1.resize(static_cast<std::size_t>(a.conv1_filters) * p1hw);
        da1.resize(static_cast<std::size_t>(a.conv1_filters) * hw);
        dyT.resize(B * std::max(a.dense_units, a.num_classes));
    }

    std::size_t input_size() const {
        return static_cast<std::size_t>(arch.in_channels) * arch.in_height * arch.in_width;
    }

    /// Loads image i of the batch, scaling intensities to [0,1].
    void set_input(int i, const Image& img) {
        if (img.channels != arch.in_channels || img.height != arch.in_height ||
            img.width != arch.in_width)
            throw std::invalid_argument("Workspace: image shape does not match architecture");
        T* row = xbuf.data() + static_cast<std::size_t>(i) * input_size();
        for (std::size_t p = 0; p < input_size(); ++p) row[p] = img.pixels[p] / T(255);
    }
};

/// Batched forward over rows 0..n-1 of ws.xbuf; logits land in ws.logits.
template <class T>
void forward_batch(const Network<T>& net, Workspace<T>& ws, int n) {
    const Architecture& a = net.arch;
    const ParamLayout lay(a);
    const T* w = net.weights.data();
    const int hw = a.in_height * a.in_width;
    const int p1h = a.pool1_h(), p1w = a.pool1_w();
    const int p1hw = p1h * p1w;
    const int flat = a.flat_size();

    detail::transpose(ws.fc1_wT.data(), w + lay.fc1_w, a.dense_units, flat);
    detail::transpose(ws.fc2_wT.data(), w + lay.fc2_w, a.num_classes, a.dense_units);

    for (int i = 0; i < n; ++i) {
        const T* x = ws.xbuf.data() + static_cast<std::size_t>(i) * ws.input_size();
        T* a1 = ws.a1.data() + static_cast<std::size_t>(i) * a.conv1_filters * hw;
        detail::im2col3x3(x, a.in_channels, a.in_height, a.in_width, ws.col.data());
        detail::gemm(a1, w + lay.conv1_w, ws.col.data(), a.conv1_filters, a.in_channels * 9, hw);
        detail::add_bias_relu(a1, w + lay.conv1_b, a.conv1_filters, hw);

        T* p1 = ws.p1.data() + static_cast<std::size_t>(i) * a.conv1_filters * p1hw;
        std::uint8_t* i1 = ws.idx1.data() + static_cast<std::size_t>(i) * a.conv1_filters * p1hw;
        detail::maxpool2x2(a1, a.conv1_filters, a.in_height, a.in_width, p1, i1);

        T* a2 = ws.a2.data() + static_cast<std::size_t>(i) * a.conv2_filters * p1hw;
        detail::im2col3x3(p1, a.conv1_filters, p1h, p1w, ws.col.data());
        detail::gemm(a2, w + lay.conv2_w, ws.col.data(), a.conv2_filters, a.conv1_filters * 9, p1hw);
        detail::add_bias_relu(a2, w + lay.conv2_b, a.conv2_filters, p1hw);

        T* p2 = ws.p2.data() + static_cast<std::size_t>(i) * flat;
        std::uint8_t* i2 = ws.idx2.data() + static_cast<std::size_t>(i) * flat;
        detail::maxpool2x2(a2, a.conv2_filters, p1h, p1w, p2, i2);
    }

    detail::gemm(ws.fc1_out.data(), ws.p2.data(), ws.fc1_wT.data(), n, flat, a.dense_units);
    for (int i = 0; i < n; ++i)
        detail::add_bias_relu(ws.fc1_out.data() + static_cast<std::size_t>(i) * a.dense_units,
                              w + lay.fc1_b, a.dense_units, 1);

    detail::gemm(ws.logits.data(), ws.fc1_out.data(), ws.fc2_wT.data(), n, a.dense_units,
                 a.num_classes);
    for (int i = 0; i < n; ++i) {
        T* row = ws.logits.data() + static_cast<std::size_t>(i) * a.num_classes;
        for (int j = 0; j < a.num_classes; ++j) row[j] += w[lay.fc2_b + j];
    }
}

/// Softmax with max subtraction; fills ws.probs and returns the mean
/// cross-entropy. dlogits is left in ws.dlogits scaled by 1/n.
template <class T>
double softmax_cross_entropy(const Network<T>& net, Workspace<T>& ws, const int* labels, int n) {
    const int K = net.arch.num_classes;
    double loss = 0.0;
    const T invn = T(1) / static_cast<T>(n);
    for (int i = 0; i < n; ++i) {
        const T* row = ws.logits.data() + static_cast<std::size_t>(i) * K;
        T* prow = ws.probs.data() + static_cast<std::size_t>(i) * K;
        T* drow = ws.dlogits.data() + static_cast<std::size_t>(i) * K;
        T mx = row[0];
        for (int j = 1; j < K; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < K; ++j) {
            prow[j] = std::exp(row[j] - mx);
            sum += prow[j];
        }
        const T inv_sum = static_cast<T>(1.0 / sum);
        for (int j = 0; j < K; ++j) prow[j] *= inv_sum;
        const int y = labels[i];
        loss -= static_cast<double>(row[y] - mx) - std::log(sum);
        for (int j = 0; j < K; ++j) drow[j] = (prow[j] - (j == y ? T(1) : T(0))) * invn;
    }
    return loss / n;
}

/// Forward + backward over rows 0..n-1; accumulates into grads (same layout
/// as weights, caller zeroes it) and returns the mean cross-entropy.
/// Per-image accumulation order is fixed (ascending batch index).
template <class T>
double loss_and_backward(const Network<T>& net, Workspace<T>& ws, const int* labels, int n,
                         std::vector<T>& grads) {
    const Architecture& a = net.arch;
    const ParamLayout lay(a);
    for (int i = 0; i < n; ++i)
        if (labels[i] < 0 || labels[i] >= a.num_classes)
            throw std::invalid_argument("loss_and_backward: label out of range");

    forward_batch(net, ws, n);
    const double loss = softmax_cross_entropy(net, ws, labels, n);

    const T* w = net.weights.data();
    T* g = grads.data();
    const int hw = a.in_height * a.in_width;
    const int p1h = a.pool1_h(), p1w = a.pool1_w();
    const int p1hw = p1h * p1w;
    const int flat = a.flat_size();
    const int D = a.dense_units, K = a.num_classes;

    // dense 2: dW += dY^T X, db += column sums, dX = dY W
    detail::transpose(ws.dyT.data(), ws.dlogits.data(), n, K);
    detail::gemm_acc(g + lay.fc2_w, ws.dyT.data(), ws.fc1_out.data(), K, n, D);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < K; ++j)
            g[lay.fc2_b + j] += ws.dlogits[static_cast<std::size_t>(i) * K + j];
    detail::gemm(ws.dfc1.data(), ws.dlogits.data(), w + lay.fc2_w, n, K, D);

    // ReLU mask for dense 1 output
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * D; ++i)
        if (ws.fc1_out[i] <= T(0)) ws.dfc1[i] = T(0);

    // dense 1
    detail::transpose(ws.dyT.data(), ws.dfc1.data(), n, D);
    detail::gemm_acc(g + lay.fc1_w, ws.dyT.data(), ws.p2.data(), D, n, flat);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < D; ++j)
            g[lay.fc1_b + j] += ws.dfc1[static_cast<std::size_t>(i) * D + j];
    detail::gemm(ws.dflat.data(), ws.dfc1.data(), w + lay.fc1_w, n, D, flat);

    detail::transpose(ws.conv2_wT.data(), w + lay.conv2_w, a.conv2_filters, a.conv1_filters * 9);

    for (int i = 0; i < n; ++i) {
        const T* a1 = ws.a1.data() + static_cast<std::size_t>(i) * a.conv1_filters * hw;
        const T* a2 = ws.a2.data() + static_cast<std::size_t>(i) * a.conv2_filters * p1hw;
        const T* p1 = ws.p1.data() + static_cast<std::size_t>(i) * a.conv1_filters * p1hw;
        const T* x = ws.xbuf.data() + static_cast<std::size_t>(i) * ws.input_size();
        const std::uint8_t* i1 = ws.idx1.data() + static_cast<std::size_t>(i) * a.conv1_filters * p1hw;
        const std::uint8_t* i2 = ws.idx2.data() + static_cast<std::size_t>(i) * flat;

        // pool2 backward + ReLU mask of conv2
        detail::maxpool2x2_backward(ws.dflat.data() + static_cast<std::size_t>(i) * flat, i2,
                                    a.conv2_filters, p1h, p1w, ws.da2.data());
        for (std::size_t p = 0; p < static_cast<std::size_t>(a.conv2_filters) * p1hw; ++p)
            if (a2[p] <= T(0)) ws.da2[p] = T(0);

        // conv2 weight/bias grads
        detail::im2colT3x3(p1, a.conv1_filters, p1h, p1w, ws.colT.data());
        detail::gemm_acc(g + lay.conv2_w, ws.da2.data(), ws.colT.data(), a.conv2_filters, p1hw,
                         a.conv1_filters * 9);
        for (int f = 0; f < a.conv2_filters; ++f) {
            T s = T(0);
            const T* row = ws.da2.data() + static_cast<std::size_t>(f) * p1hw;
            for (int p = 0; p < p1hw; ++p) s += row[p];
            g[lay.conv2_b + f] += s;
        }

        // conv2 input grad -> pool1 backward -> ReLU mask of conv1
        detail::gemm(ws.dcol2.data(), ws.conv2_wT.data(), ws.da2.data(), a.conv1_filters * 9,
                     a.conv2_filters, p1hw);
        detail::col2im3x3(ws.dcol2.data(), a.conv1_filters, p1h, p1w, ws.dp1.data());
        detail::maxpool2x2_backward(ws.dp1.data(), i1, a.conv1_filters, a.in_height, a.in_width,
                                    ws.da1.data());
        for (std::size_t p = 0; p < static_cast<std::size_t>(a.conv1_filters) * hw; ++p)
            if (a1[p] <= T(0)) ws.da1[p] = T(0);

        // conv1 weight/bias grads (input grad not needed)
        detail::im2colT3x3(x, a.in_channels, a.in_height, a.in_width, ws.colT.data());
        detail::gemm_acc(g + lay.conv1_w, ws.da1.data(), ws.colT.data(), a.conv1_filters, hw,
                         a.in_channels * 9);
        for (int f = 0; f < a.conv1_filters; ++f) {
            T s = T(0);
            const T* row = ws.da1.data() + static_cast<std::size_t>(f) * hw;
            for (int p = 0; p < hw; ++p) s += row[p];
            g[lay.conv1_b + f] += s;
        }
    }
    return loss;
}

/// Logits for one image. Pass a workspace to avoid per-call allocation.
template <class T>
std::vector<T> forward(const Network<T>& net, const Image& x, Workspace<T>* ws = nullptr) {
    std::optional<Workspace<T>> local;
    if (!ws) {
        local.emplace(net.arch, 1);
        ws = &*local;
    }
    if (!(ws->arch == net.arch) || ws->capacity < 1)
        throw std::invalid_argument("forward: workspace does not match the model");
    ws->set_input(0, x);
    forward_batch(net, *ws, 1);
    return std::vector<T>(ws->logits.begin(), ws->logits.begin() + net.arch.num_classes);
}

/// Mean cross-entropy and full gradient for an explicit batch.
template <class T>
std::pair<double, std::vector<T>> loss_and_grads(const Network<T>& net,
                                                 const std::vector<Image>& images,
                                                 const std::vector<int>& labels) {
    if (images.empty() || images.size() != labels.size())
        throw std::invalid_argument("loss_and_grads: empty or mismatched batch");
    Workspace<T> ws(net.arch, static_cast<int>(images.size()));
    for (std::size_t i = 0; i < images.size(); ++i) ws.set_input(static_cast<int>(i), images[i]);
    std::vector<T> grads(net.weights.size(), T(0));
    const double loss =
        loss_and_backward(net, ws, labels.data(), static_cast<int>(images.size()), grads);
    return {loss, std::move(grads)};
}

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int epochs = 10;
    int batch_size = 64;
    std::uint64_t seed = 0;

    void validate(std::size_t dataset_size) const {
        if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
        if (momentum < 0.0 || momentum >= 1.0)
            throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (batch_size < 1 || static_cast<std::size_t>(batch_size) > dataset_size)
            throw std::invalid_argument("TrainConfig: batch_size must be in [1, dataset size]");
    }
};

struct TrainLog {
    std::vector<double> epoch_mean_loss;
};

namespace detail {

// Shared loop for plain and enhanced training. The first poisoned_count items
// of the combined (poisoned ++ benign) sequence get a freshly sampled theta
// each time they enter a batch; the rest are used as-is. Shuffling and theta
// sampling draw from separate derived streams, so a degenerate identity-only
// domain leaves the trajectory bit-identical to plain training.
template <class T>
Network<T> train_impl(const Network<T>& start, const LabeledDataset& poisoned,
                      const LabeledDataset& benign, std::size_t poisoned_count,
                      const TransformDomain& domain, const TrainConfig& cfg, TrainLog* log) {
    const std::size_t n_total = poisoned.size() + benign.size();
    cfg.validate(n_total);
    domain.validate_for(start.arch.in_height, start.arch.in_width);
    if (n_total == 0) throw std::invalid_argument("train: empty dataset");

    auto image_at = [&](std::size_t i) -> const Image& {
        return i < poisoned.size() ? poisoned.images[i] : benign.images[i - poisoned.size()];
    };
    auto label_at = [&](std::size_t i) -> int {
        return i < poisoned.size() ? poisoned.labels[i] : benign.labels[i - poisoned.size()];
    };
    for (std::size_t i = 0; i < n_total; ++i)
        if (label_at(i) < 0 || label_at(i) >= start.arch.num_classes)
            throw std::invalid_argument("train: label out of range for the model");

    Network<T> net = start;
    std::vector<T> grads(net.weights.size(), T(0));
    std::vector<T> velocity(net.weights.size(), T(0));
    Workspace<T> ws(net.arch, cfg.batch_size);
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    Rng transform_rng(derive_seed(cfg.seed, "transform"));

    std::vector<std::size_t> order(n_total);
    for (std::size_t i = 0; i < n_total; ++i) order[i] = i;
    std::vector<int> batch_labels(cfg.batch_size);

    const T lr = static_cast<T>(cfg.learning_rate);
    const T mom = static_cast<T>(cfg.momentum);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t cursor = 0;
        int batch_index = 0;
        while (cursor < n_total) {
            const int bsz = static_cast<int>(
                std::min<std::size_t>(cfg.batch_size, n_total - cursor));
            for (int i = 0; i < bsz; ++i) {
                const std::size_t item = order[cursor + i];
                batch_labels[i] = label_at(item);
                if (item < poisoned_count) {
                    const TransformParam theta = sample_param(domain, transform_rng);
                    ws.set_input(i, apply(theta, image_at(item)));
                } else {
                    ws.set_input(i, image_at(item));
                }
            }
            std::fill(grads.begin(), grads.end(), T(0));
            const double loss = loss_and_backward(net, ws, batch_labels.data(), bsz, grads);
            if (!std::isfinite(loss))
                throw std::runtime_error("training diverged at epoch " + std::to_string(epoch + 1) +
                                         " batch " + std::to_string(batch_index + 1));
            for (std::size_t p = 0; p < net.weights.size(); ++p) {
                velocity[p] = mom * velocity[p] + grads[p];
                net.weights[p] -= lr * velocity[p];
            }
            epoch_loss += loss * bsz;
            cursor += bsz;
            ++batch_index;
        }
        if (log) log->epoch_mean_loss.push_back(epoch_loss / static_cast<double>(n_total));
    }
    return net;
}

}  // namespace detail

/// SGD with momentum over seeded-shuffled mini-batches.
template <class T>
Network<T> train(const Network<T>& start, const LabeledDataset& data, const TrainConfig& cfg,
                 TrainLog* log = nullptr) {
    data.validate();
    static const LabeledDataset empty{};
    return detail::train_impl(start, empty, data, 0, TransformDomain{}, cfg, log);
}

/// Same loop, but every time a poisoned item enters a batch it is transformed
/// by a freshly sampled parameter; benign items are never transformed.
template <class T>
Network<T> train_enhanced(const Network<T>& start, const LabeledDataset& poisoned,
                          const LabeledDataset& benign, const TransformDomain& domain,
                          const TrainConfig& cfg, TrainLog* log = nullptr) {
    if (!poisoned.empty()) poisoned.validate();
    if (!benign.empty()) benign.validate();
    return detail::train_impl(start, poisoned, benign, poisoned.size(), domain, cfg, log);
}

}  // namespace triggerlab
