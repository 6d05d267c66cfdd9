#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "fwionet/tensor.hpp"

namespace fwionet {

// All convolutions follow the cross-correlation convention. Backward kernels
// are written gather-style (each output element owned by one loop iteration)
// so parallel runs stay bit-deterministic.

namespace detail {

inline int conv_out_extent(int in, int pad, int k, int stride) {
    return (in + 2 * pad - k) / stride + 1;
}

// valid output range [lo, hi] such that 0 <= o*stride - pad + k < limit
inline std::pair<int, int> valid_range(int limit, int pad, int k, int stride, int out_extent) {
    int lo = (pad - k) > 0 ? (pad - k + stride - 1) / stride : 0;
    int num = limit - 1 + pad - k;
    int hi = num < 0 ? -1 : std::min(out_extent - 1, num / stride);
    return {lo, hi};
}

template <typename T>
void check_4d(const Tensor<T>& t, const char* what) {
    if (t.ndim() != 4) throw std::invalid_argument(std::string(what) + " must be 4-D (N,C,H,W)");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: input (N,C,H,W), weight (F,C,kh,kw), bias (F) -> (N,F,H',W')
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::pair<int, int> stride, std::pair<int, int> padding) {
    detail::check_4d(input, "conv2d input");
    detail::check_4d(weight, "conv2d weight");
    const int N = static_cast<int>(input.extent(0)), C = static_cast<int>(input.extent(1));
    const int H = static_cast<int>(input.extent(2)), W = static_cast<int>(input.extent(3));
    const int F = static_cast<int>(weight.extent(0)), KH = static_cast<int>(weight.extent(2));
    const int KW = static_cast<int>(weight.extent(3));
    if (static_cast<int>(weight.extent(1)) != C)
        throw std::invalid_argument("conv2d: input channels do not match weight channels");
    if (bias.ndim() != 1 || static_cast<int>(bias.extent(0)) != F)
        throw std::invalid_argument("conv2d: bias length must equal output channels");
    const int sh = stride.first, sw = stride.second, ph = padding.first, pw = padding.second;
    if (sh < 1 || sw < 1) throw std::invalid_argument("conv2d: stride components must be >= 1");
    if (H + 2 * ph < KH || W + 2 * pw < KW)
        throw std::invalid_argument("conv2d: padded extents smaller than kernel");
    const int OH = detail::conv_out_extent(H, ph, KH, sh);
    const int OW = detail::conv_out_extent(W, pw, KW, sw);

    Tensor<T> out({static_cast<std::size_t>(N), static_cast<std::size_t>(F), static_cast<std::size_t>(OH),
                   static_cast<std::size_t>(OW)});
    const T* in = input.data();
    const T* w = weight.data();
    const T* b = bias.data();
    T* o = out.data();

#pragma omp parallel for schedule(static)
    for (int nf = 0; nf < N * F; ++nf) {
        const int n = nf / F, f = nf % F;
        T* out_plane = o + static_cast<std::size_t>(nf) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
            T* out_row = out_plane + static_cast<std::size_t>(oh) * OW;
            for (int ow = 0; ow < OW; ++ow) out_row[ow] = b[f];
            for (int c = 0; c < C; ++c) {
                const T* in_plane = in + (static_cast<std::size_t>(n) * C + c) * H * W;
                const T* w_ck = w + (static_cast<std::size_t>(f) * C + c) * KH * KW;
                for (int kh = 0; kh < KH; ++kh) {
                    const int ih = oh * sh - ph + kh;
                    if (ih < 0 || ih >= H) continue;
                    const T* in_row = in_plane + static_cast<std::size_t>(ih) * W;
                    for (int kw = 0; kw < KW; ++kw) {
                        const T wv = w_ck[kh * KW + kw];
                        const auto [lo, hi] = detail::valid_range(W, pw, kw, sw, OW);
                        for (int ow = lo; ow <= hi; ++ow) out_row[ow] += wv * in_row[ow * sw - pw + kw];
                    }
                }
            }
        }
    }

    if (tape) {
        Tensor<T> in_t = input, w_t = weight, b_t = bias, out_t = out;
        tape->record({input, weight, bias}, out, [=]() mutable {
            const std::vector<T>& go = out_t.grad_view();
            const T* g = go.data();
            // d input
            {
                std::vector<T>& gi = in_t.grad();
                T* gip = gi.data();
                const T* wp = w_t.data();
#pragma omp parallel for schedule(static)
                for (int nc = 0; nc < N * C; ++nc) {
                    const int n = nc / C, c = nc % C;
                    T* gin_plane = gip + static_cast<std::size_t>(nc) * H * W;
                    for (int f = 0; f < F; ++f) {
                        const T* go_plane = g + (static_cast<std::size_t>(n) * F + f) * OH * OW;
                        const T* w_ck = wp + (static_cast<std::size_t>(f) * C + c) * KH * KW;
                        for (int kh = 0; kh < KH; ++kh) {
                            for (int oh = 0; oh < OH; ++oh) {
                                const int ih = oh * sh - ph + kh;
                                if (ih < 0 || ih >= H) continue;
                                const T* go_row = go_plane + static_cast<std::size_t>(oh) * OW;
                                T* gin_row = gin_plane + static_cast<std::size_t>(ih) * W;
                                for (int kw = 0; kw < KW; ++kw) {
                                    const T wv = w_ck[kh * KW + kw];
                                    const auto [lo, hi] = detail::valid_range(W, pw, kw, sw, OW);
                                    for (int ow = lo; ow <= hi; ++ow)
                                        gin_row[ow * sw - pw + kw] += wv * go_row[ow];
                                }
                            }
                        }
                    }
                }
            }
            // d weight
            {
                std::vector<T>& gw = w_t.grad();
                T* gwp = gw.data();
                const T* ip = in_t.data();
#pragma omp parallel for schedule(static)
                for (int fc = 0; fc < F * C; ++fc) {
                    const int f = fc / C, c = fc % C;
                    for (int kh = 0; kh < KH; ++kh) {
                        for (int kw = 0; kw < KW; ++kw) {
                            double acc = 0.0;
                            const auto [lo, hi] = detail::valid_range(W, pw, kw, sw, OW);
                            for (int n = 0; n < N; ++n) {
                                const T* go_plane = g + (static_cast<std::size_t>(n) * F + f) * OH * OW;
                                const T* in_plane = ip + (static_cast<std::size_t>(n) * C + c) * H * W;
                                for (int oh = 0; oh < OH; ++oh) {
                                    const int ih = oh * sh - ph + kh;
                                    if (ih < 0 || ih >= H) continue;
                                    const T* go_row = go_plane + static_cast<std::size_t>(oh) * OW;
                                    const T* in_row = in_plane + static_cast<std::size_t>(ih) * W;
                                    for (int ow = lo; ow <= hi; ++ow)
                                        acc += static_cast<double>(go_row[ow]) * in_row[ow * sw - pw + kw];
                                }
                            }
                            gwp[(static_cast<std::size_t>(fc) * KH + kh) * KW + kw] += static_cast<T>(acc);
                        }
                    }
                }
            }
            // d bias
            {
                std::vector<T>& gb = b_t.grad();
                for (int f = 0; f < F; ++f) {
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n) {
                        const T* go_plane = g + (static_cast<std::size_t>(n) * F + f) * OH * OW;
                        for (int i = 0; i < OH * OW; ++i) acc += static_cast<double>(go_plane[i]);
                    }
                    gb[static_cast<std::size_t>(f)] += static_cast<T>(acc);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// conv_transpose2d: input (N,C,H,W), weight (C,F,kh,kw), bias (F)
//   -> (N,F,H',W') with H' = (H-1)*sh - 2*ph + kh
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> conv_transpose2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::pair<int, int> stride, std::pair<int, int> padding) {
    detail::check_4d(input, "conv_transpose2d input");
    detail::check_4d(weight, "conv_transpose2d weight");
    const int N = static_cast<int>(input.extent(0)), C = static_cast<int>(input.extent(1));
    const int H = static_cast<int>(input.extent(2)), W = static_cast<int>(input.extent(3));
    if (static_cast<int>(weight.extent(0)) != C)
        throw std::invalid_argument("conv_transpose2d: input channels do not match weight channels");
    const int F = static_cast<int>(weight.extent(1)), KH = static_cast<int>(weight.extent(2));
    const int KW = static_cast<int>(weight.extent(3));
    if (bias.ndim() != 1 || static_cast<int>(bias.extent(0)) != F)
        throw std::invalid_argument("conv_transpose2d: bias length must equal output channels");
    const int sh = stride.first, sw = stride.second, ph = padding.first, pw = padding.second;
    if (sh < 1 || sw < 1) throw std::invalid_argument("conv_transpose2d: stride components must be >= 1");
    const int OH = (H - 1) * sh - 2 * ph + KH;
    const int OW = (W - 1) * sw - 2 * pw + KW;
    if (OH < 1 || OW < 1) throw std::invalid_argument("conv_transpose2d: output extent would be empty");

    Tensor<T> out({static_cast<std::size_t>(N), static_cast<std::size_t>(F), static_cast<std::size_t>(OH),
                   static_cast<std::size_t>(OW)});
    const T* in = input.data();
    const T* w = weight.data();
    const T* b = bias.data();
    T* o = out.data();

#pragma omp parallel for schedule(static)
    for (int nf = 0; nf < N * F; ++nf) {
        const int n = nf / F, f = nf % F;
        T* out_plane = o + static_cast<std::size_t>(nf) * OH * OW;
        for (int i = 0; i < OH * OW; ++i) out_plane[i] = b[f];
        for (int c = 0; c < C; ++c) {
            const T* in_plane = in + (static_cast<std::size_t>(n) * C + c) * H * W;
            const T* w_cf = w + (static_cast<std::size_t>(c) * F + f) * KH * KW;
            for (int kh = 0; kh < KH; ++kh) {
                for (int ih = 0; ih < H; ++ih) {
                    const int oh = ih * sh - ph + kh;
                    if (oh < 0 || oh >= OH) continue;
                    const T* in_row = in_plane + static_cast<std::size_t>(ih) * W;
                    T* out_row = out_plane + static_cast<std::size_t>(oh) * OW;
                    for (int kw = 0; kw < KW; ++kw) {
                        const T wv = w_cf[kh * KW + kw];
                        const auto [lo, hi] = detail::valid_range(OW, pw, kw, sw, W);
                        for (int iw = lo; iw <= hi; ++iw) out_row[iw * sw - pw + kw] += wv * in_row[iw];
                    }
                }
            }
        }
    }

    if (tape) {
        Tensor<T> in_t = input, w_t = weight, b_t = bias, out_t = out;
        tape->record({input, weight, bias}, out, [=]() mutable {
            const T* g = out_t.grad_view().data();
            // d input: gather back through the forward scatter
            {
                std::vector<T>& gi = in_t.grad();
                T* gip = gi.data();
                const T* wp = w_t.data();
#pragma omp parallel for schedule(static)
                for (int nc = 0; nc < N * C; ++nc) {
                    const int n = nc / C, c = nc % C;
                    T* gin_plane = gip + static_cast<std::size_t>(nc) * H * W;
                    for (int f = 0; f < F; ++f) {
                        const T* go_plane = g + (static_cast<std::size_t>(n) * F + f) * OH * OW;
                        const T* w_cf = wp + (static_cast<std::size_t>(c) * F + f) * KH * KW;
                        for (int kh = 0; kh < KH; ++kh) {
                            for (int ih = 0; ih < H; ++ih) {
                                const int oh = ih * sh - ph + kh;
                                if (oh < 0 || oh >= OH) continue;
                                const T* go_row = go_plane + static_cast<std::size_t>(oh) * OW;
                                T* gin_row = gin_plane + static_cast<std::size_t>(ih) * W;
                                for (int kw = 0; kw < KW; ++kw) {
                                    const T wv = w_cf[kh * KW + kw];
                                    const auto [lo, hi] = detail::valid_range(OW, pw, kw, sw, W);
                                    for (int iw = lo; iw <= hi; ++iw)
                                        gin_row[iw] += wv * go_row[iw * sw - pw + kw];
                                }
                            }
                        }
                    }
                }
            }
            // d weight
            {
                std::vector<T>& gw = w_t.grad();
                T* gwp = gw.data();
                const T* ip = in_t.data();
#pragma omp parallel for schedule(static)
                for (int cf = 0; cf < C * F; ++cf) {
                    const int c = cf / F, f = cf % F;
                    for (int kh = 0; kh < KH; ++kh) {
                        for (int kw = 0; kw < KW; ++kw) {
                            double acc = 0.0;
                            const auto [lo, hi] = detail::valid_range(OW, pw, kw, sw, W);
                            for (int n = 0; n < N; ++n) {
                                const T* in_plane = ip + (static_cast<std::size_t>(n) * C + c) * H * W;
                                const T* go_plane = g + (static_cast<std::size_t>(n) * F + f) * OH * OW;
                                for (int ih = 0; ih < H; ++ih) {
                                    const int oh = ih * sh - ph + kh;
                                    if (oh < 0 || oh >= OH) continue;
                                    const T* in_row = in_plane + static_cast<std::size_t>(ih) * W;
                                    const T* go_row = go_plane + static_cast<std::size_t>(oh) * OW;
                                    for (int iw = lo; iw <= hi; ++iw)
                                        acc += static_cast<double>(in_row[iw]) * go_row[iw * sw - pw + kw];
                                }
                            }
                            gwp[(static_cast<std::size_t>(cf) * KH + kh) * KW + kw] += static_cast<T>(acc);
                        }
                    }
                }
            }
            // d bias
            {
                std::vector<T>& gb = b_t.grad();
                for (int f = 0; f < F; ++f) {
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n) {
                        const T* go_plane = g + (static_cast<std::size_t>(n) * F + f) * OH * OW;
                        for (int i = 0; i < OH * OW; ++i) acc += static_cast<double>(go_plane[i]);
                    }
                    gb[static_cast<std::size_t>(f)] += static_cast<T>(acc);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// batch_norm2d
// ---------------------------------------------------------------------------
enum class BNMode { train, eval };

template <typename T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;
    bool initialized = false;

    BatchNormState() = default;
    explicit BatchNormState(std::size_t channels)
        : running_mean(Tensor<T>({channels})), running_var(Tensor<T>::full({channels}, T(1))) {}
};

template <typename T>
Tensor<T> batch_norm2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormState<T>& state, BNMode mode, T eps = T(1e-5), T momentum = T(0.1)) {
    detail::check_4d(input, "batch_norm2d input");
    const int N = static_cast<int>(input.extent(0)), C = static_cast<int>(input.extent(1));
    const int H = static_cast<int>(input.extent(2)), W = static_cast<int>(input.extent(3));
    if (gamma.numel() != static_cast<std::size_t>(C) || beta.numel() != static_cast<std::size_t>(C))
        throw std::invalid_argument("batch_norm2d: gamma/beta length must equal channel count");
    if (state.running_mean.numel() != static_cast<std::size_t>(C))
        throw std::invalid_argument("batch_norm2d: state channel count mismatch");
    const long long M = static_cast<long long>(N) * H * W;
    if (mode == BNMode::train && M < 2)
        throw std::invalid_argument("batch_norm2d: train mode needs at least 2 values per channel");
    if (mode == BNMode::eval && !state.initialized)
        throw NumericError("batch_norm2d: eval mode with uninitialized running stats");

    Tensor<T> out(input.shape());
    std::vector<T> mean(C), ivar(C);
    Tensor<T> xhat(input.shape());  // saved for backward
    const T* x = input.data();
    const T* gp = gamma.data();
    const T* bp = beta.data();
    T* y = out.data();
    T* xh = xhat.data();
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    if (mode == BNMode::train) {
#pragma omp parallel for schedule(static)
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* p = x + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) s += static_cast<double>(p[i]);
            }
            const double mu = s / static_cast<double>(M);
            double v = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* p = x + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = static_cast<double>(p[i]) - mu;
                    v += d * d;
                }
            }
            const double var = v / static_cast<double>(M);
            mean[c] = static_cast<T>(mu);
            ivar[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            // running stats: biased batch var is used for normalization,
            // the unbiased estimate is what the running buffer tracks
            const double unbiased = M > 1 ? var * static_cast<double>(M) / static_cast<double>(M - 1) : var;
            T& rm = state.running_mean.vec()[static_cast<std::size_t>(c)];
            T& rv = state.running_var.vec()[static_cast<std::size_t>(c)];
            rm = static_cast<T>((1.0 - static_cast<double>(momentum)) * rm + static_cast<double>(momentum) * mu);
            rv = static_cast<T>((1.0 - static_cast<double>(momentum)) * rv + static_cast<double>(momentum) * unbiased);
        }
        state.initialized = true;
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = state.running_mean.vec()[static_cast<std::size_t>(c)];
            ivar[c] = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>(state.running_var.vec()[static_cast<std::size_t>(c)]) +
                                static_cast<double>(eps)));
        }
    }

#pragma omp parallel for schedule(static)
    for (int nc = 0; nc < N * C; ++nc) {
        const int c = nc % C;
        const T* p = x + static_cast<std::size_t>(nc) * plane;
        T* q = y + static_cast<std::size_t>(nc) * plane;
        T* h = xh + static_cast<std::size_t>(nc) * plane;
        const T mu = mean[c], iv = ivar[c], ga = gp[c], be = bp[c];
        for (std::size_t i = 0; i < plane; ++i) {
            const T xn = (p[i] - mu) * iv;
            h[i] = xn;
            q[i] = ga * xn + be;
        }
    }

    if (tape) {
        Tensor<T> in_t = input, g_t = gamma, b_t = beta, out_t = out, xh_t = xhat;
        std::vector<T> ivar_c = ivar;
        const bool train = (mode == BNMode::train);
        tape->record({input, gamma, beta}, out, [=]() mutable {
            const T* g = out_t.grad_view().data();
            const T* hv = xh_t.data();
            std::vector<T>& gi = in_t.grad();
            std::vector<T>& gg = g_t.grad();
            std::vector<T>& gb = b_t.grad();
            const T* gamma_p = g_t.data();
#pragma omp parallel for schedule(static)
            for (int c = 0; c < C; ++c) {
                double sum_dy = 0.0, sum_dy_xh = 0.0;
                for (int n = 0; n < N; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_dy += static_cast<double>(g[base + i]);
                        sum_dy_xh += static_cast<double>(g[base + i]) * hv[base + i];
                    }
                }
                gb[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy);
                gg[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy_xh);
                const double k = static_cast<double>(gamma_p[c]) * ivar_c[c];
                const double mean_dy = sum_dy / static_cast<double>(M);
                const double mean_dy_xh = sum_dy_xh / static_cast<double>(M);
                for (int n = 0; n < N; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
                    if (train) {
                        for (std::size_t i = 0; i < plane; ++i)
                            gi[base + i] += static_cast<T>(
                                k * (static_cast<double>(g[base + i]) - mean_dy - hv[base + i] * mean_dy_xh));
                    } else {
                        for (std::size_t i = 0; i < plane; ++i)
                            gi[base + i] += static_cast<T>(k * static_cast<double>(g[base + i]));
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------
enum class ActKind { relu, leaky_relu, tanh };

template <typename T>
Tensor<T> activation(Tape<T>* tape, ActKind kind, const Tensor<T>& input, T slope = T(0.2)) {
    Tensor<T> out(input.shape());
    const T* x = input.data();
    T* y = out.data();
    const std::size_t n = input.numel();
    // largest representable value strictly below 1; keeps tanh output in the
    // open interval even where std::tanh rounds to exactly +-1
    const T one_minus = std::nextafter(T(1), T(0));
    switch (kind) {
        case ActKind::relu:
#pragma omp parallel for schedule(static)
            for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
            break;
        case ActKind::leaky_relu:
#pragma omp parallel for schedule(static)
            for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
            break;
        case ActKind::tanh:
#pragma omp parallel for schedule(static)
            for (long long i = 0; i < static_cast<long long>(n); ++i) {
                T v = std::tanh(x[i]);
                if (v >= T(1)) v = one_minus;
                if (v <= T(-1)) v = -one_minus;
                y[i] = v;
            }
            break;
    }
    if (tape) {
        Tensor<T> in_t = input, out_t = out;
        tape->record({input}, out, [=]() mutable {
            const T* g = out_t.grad_view().data();
            const T* xv = in_t.data();
            const T* yv = out_t.data();
            std::vector<T>& gi = in_t.grad();
            switch (kind) {
                case ActKind::relu:
                    for (std::size_t i = 0; i < n; ++i) gi[i] += xv[i] > T(0) ? g[i] : T(0);
                    break;
                case ActKind::leaky_relu:
                    for (std::size_t i = 0; i < n; ++i) gi[i] += xv[i] > T(0) ? g[i] : slope * g[i];
                    break;
                case ActKind::tanh:
                    for (std::size_t i = 0; i < n; ++i) gi[i] += g[i] * (T(1) - yv[i] * yv[i]);
                    break;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// linear: input (N,D_in), weight (D_out,D_in), bias (D_out) -> (N,D_out)
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (input.ndim() != 2 || weight.ndim() != 2)
        throw std::invalid_argument("linear: input and weight must be 2-D");
    const int N = static_cast<int>(input.extent(0)), D_in = static_cast<int>(input.extent(1));
    const int D_out = static_cast<int>(weight.extent(0));
    if (static_cast<int>(weight.extent(1)) != D_in)
        throw std::invalid_argument("linear: inner dimensions disagree");
    if (bias.numel() != static_cast<std::size_t>(D_out))
        throw std::invalid_argument("linear: bias length must equal output width");

    Tensor<T> out({static_cast<std::size_t>(N), static_cast<std::size_t>(D_out)});
    const T* x = input.data();
    const T* w = weight.data();
    const T* b = bias.data();
    T* y = out.data();
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        const T* xr = x + static_cast<std::size_t>(n) * D_in;
        T* yr = y + static_cast<std::size_t>(n) * D_out;
        for (int o = 0; o < D_out; ++o) {
            const T* wr = w + static_cast<std::size_t>(o) * D_in;
            double acc = static_cast<double>(b[o]);
            for (int i = 0; i < D_in; ++i) acc += static_cast<double>(xr[i]) * wr[i];
            yr[o] = static_cast<T>(acc);
        }
    }
    if (tape) {
        Tensor<T> in_t = input, w_t = weight, b_t = bias, out_t = out;
        tape->record({input, weight, bias}, out, [=]() mutable {
            const T* g = out_t.grad_view().data();
            const T* xv = in_t.data();
            const T* wv = w_t.data();
            std::vector<T>& gi = in_t.grad();
            std::vector<T>& gw = w_t.grad();
            std::vector<T>& gb = b_t.grad();
            T* gip = gi.data();
#pragma omp parallel for schedule(static)
            for (int n = 0; n < N; ++n) {
                const T* gr = g + static_cast<std::size_t>(n) * D_out;
                T* gir = gip + static_cast<std::size_t>(n) * D_in;
                for (int o = 0; o < D_out; ++o) {
                    const T gv = gr[o];
                    if (gv == T(0)) continue;
                    const T* wr = wv + static_cast<std::size_t>(o) * D_in;
                    for (int i = 0; i < D_in; ++i) gir[i] += gv * wr[i];
                }
            }
            T* gwp = gw.data();
#pragma omp parallel for schedule(static)
            for (int o = 0; o < D_out; ++o) {
                T* gwr = gwp + static_cast<std::size_t>(o) * D_in;
                double accb = 0.0;
                for (int n = 0; n < N; ++n) {
                    const T gv = g[static_cast<std::size_t>(n) * D_out + o];
                    accb += static_cast<double>(gv);
                    if (gv == T(0)) continue;
                    const T* xr = xv + static_cast<std::size_t>(n) * D_in;
                    for (int i = 0; i < D_in; ++i) gwr[i] += gv * xr[i];
                }
                gb[static_cast<std::size_t>(o)] += static_cast<T>(accb);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// elementwise_mul: identical shapes, plus the single broadcast case
// (N,C,1,1) x (N,C) used to fuse branch and trunk outputs.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> elementwise_mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    const bool same = a.shape() == b.shape();
    auto is_fusion = [](const Tensor<T>& x4, const Tensor<T>& x2) {
        return x4.ndim() == 4 && x2.ndim() == 2 && x4.extent(0) == x2.extent(0) && x4.extent(1) == x2.extent(1) &&
               x4.extent(2) == 1 && x4.extent(3) == 1;
    };
    if (!same && !is_fusion(a, b) && !is_fusion(b, a))
        throw std::invalid_argument("elementwise_mul: shapes must match (or be the (N,C,1,1) x (N,C) fusion)");

    const Tensor<T>& lhs = (!same && is_fusion(b, a)) ? b : a;  // 4-D operand when broadcasting
    const Tensor<T>& rhs = (!same && is_fusion(b, a)) ? a : b;
    Tensor<T> out(lhs.shape());
    const std::size_t n = out.numel();
    const T* pa = lhs.data();
    const T* pb = rhs.data();
    T* po = out.data();
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];  // flat layouts coincide for the fusion case

    if (tape) {
        Tensor<T> a_t = lhs, b_t = rhs, out_t = out;
        tape->record({a, b}, out, [=]() mutable {
            const T* g = out_t.grad_view().data();
            std::vector<T>& ga = a_t.grad();
            std::vector<T>& gb = b_t.grad();
            const T* av = a_t.data();
            const T* bv = b_t.data();
            for (std::size_t i = 0; i < n; ++i) {
                ga[i] += g[i] * bv[i];
                gb[i] += g[i] * av[i];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// slice2d: centered spatial crop of (N,C,H,W) to (N,C,h,w)
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> slice2d(Tape<T>* tape, const Tensor<T>& input, int target_h, int target_w) {
    detail::check_4d(input, "slice2d input");
    const int N = static_cast<int>(input.extent(0)), C = static_cast<int>(input.extent(1));
    const int H = static_cast<int>(input.extent(2)), W = static_cast<int>(input.extent(3));
    if (target_h < 1 || target_w < 1 || target_h > H || target_w > W)
        throw std::invalid_argument("slice2d: target extents must fit inside the source");
    const int oh0 = (H - target_h) / 2, ow0 = (W - target_w) / 2;

    Tensor<T> out({static_cast<std::size_t>(N), static_cast<std::size_t>(C), static_cast<std::size_t>(target_h),
                   static_cast<std::size_t>(target_w)});
    const T* x = input.data();
    T* y = out.data();
    for (int nc = 0; nc < N * C; ++nc) {
        const T* xp = x + static_cast<std::size_t>(nc) * H * W;
        T* yp = y + static_cast<std::size_t>(nc) * target_h * target_w;
        for (int r = 0; r < target_h; ++r)
            std::copy_n(xp + static_cast<std::size_t>(r + oh0) * W + ow0, target_w,
                        yp + static_cast<std::size_t>(r) * target_w);
    }
    if (tape) {
        Tensor<T> in_t = input, out_t = out;
        const int th = target_h, tw = target_w;
        tape->record({input}, out, [=]() mutable {
            const T* g = out_t.grad_view().data();
            std::vector<T>& gi = in_t.grad();
            for (int nc = 0; nc < N * C; ++nc) {
                const T* gp = g + static_cast<std::size_t>(nc) * th * tw;
                T* gip = gi.data() + static_cast<std::size_t>(nc) * H * W;
                for (int r = 0; r < th; ++r)
                    for (int cw = 0; cw < tw; ++cw)
                        gip[static_cast<std::size_t>(r + oh0) * W + ow0 + cw] +=
                            gp[static_cast<std::size_t>(r) * tw + cw];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions and reshaping
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> mae_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape()) throw std::invalid_argument("mae_loss: shape mismatch");
    const std::size_t n = pred.numel();
    const T* p = pred.data();
    const T* t = target.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(p[i]) - static_cast<double>(t[i]));
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    if (tape) {
        Tensor<T> p_t = pred, t_t = target, out_t = out;
        tape->record({pred, target}, out, [=]() mutable {
            const T g = out_t.grad_view()[0];
            const T inv = g / static_cast<T>(n);
            std::vector<T>& gp = p_t.grad();
            std::vector<T>& gt = t_t.grad();
            const T* pv = p_t.data();
            const T* tv = t_t.data();
            for (std::size_t i = 0; i < n; ++i) {
                const T d = pv[i] - tv[i];
                const T s = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
                gp[i] += s;
                gt[i] -= s;
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x) {
    double acc = 0.0;
    const T* p = x.data();
    for (std::size_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(p[i]);
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
    if (tape) {
        Tensor<T> x_t = x, out_t = out;
        tape->record({x}, out, [=]() mutable {
            const T g = out_t.grad_view()[0];
            std::vector<T>& gx = x_t.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, std::vector<std::size_t> new_shape) {
    if (Tensor<T>::checked_numel(new_shape) != x.numel())
        throw std::invalid_argument("reshape: element count must be preserved");
    Tensor<T> out = Tensor<T>::from_data(std::move(new_shape), x.vec());
    if (tape) {
        Tensor<T> x_t = x, out_t = out;
        tape->record({x}, out, [=]() mutable {
            const std::vector<T>& g = out_t.grad_view();
            std::vector<T>& gx = x_t.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

// dot_rows: a (M,K) with b (K) -> (M); row-wise inner products against one
// shared vector. Used by the vanilla DeepONet read-out.
template <typename T>
Tensor<T> dot_rows(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 1 || a.extent(1) != b.extent(0))
        throw std::invalid_argument("dot_rows: need (M,K) and (K)");
    const std::size_t M = a.extent(0), K = a.extent(1);
    Tensor<T> out({M});
    const T* ap = a.data();
    const T* bp = b.data();
    T* op = out.data();
    for (std::size_t m = 0; m < M; ++m) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += static_cast<double>(ap[m * K + k]) * bp[k];
        op[m] = static_cast<T>(acc);
    }
    if (tape) {
        Tensor<T> a_t = a, b_t = b, out_t = out;
        tape->record({a, b}, out, [=]() mutable {
            const T* g = out_t.grad_view().data();
            std::vector<T>& ga = a_t.grad();
            std::vector<T>& gb = b_t.grad();
            const T* av = a_t.data();
            const T* bv = b_t.data();
            for (std::size_t m = 0; m < M; ++m) {
                const T gv = g[m];
                for (std::size_t k = 0; k < K; ++k) {
                    ga[m * K + k] += gv * bv[k];
                    gb[k] += gv * av[m * K + k];
                }
            }
        });
    }
    return out;
}

}  // namespace fwionet
