#include "sc2/ops.hpp"

#include "sc2/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace sc2::ops {

namespace {

using detail::make_result;
using detail::TensorNode;

// gradient buffer of input `i` of a recorded node, or nullptr when that input
// does not take gradients
template <typename T>
std::vector<T> * input_grad(TensorNode<T> & out, std::size_t i) {
    auto & in = out.inputs[i];
    if (!in || !in->requires_grad) {
        return nullptr;
    }
    return &in->ensure_grad();
}

template <typename T>
void require_same(const Tensor<T> & a, const Tensor<T> & b, const char * op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

template <typename T>
void require_rank(const Tensor<T> & a, std::size_t rank, const char * op) {
    if (a.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_str(a.shape()));
    }
}

template <typename T, typename F, typename G>
Tensor<T> unary(const Tensor<T> & a, F fwd, G dfdx) {
    auto x = a.data();
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = fwd(x[i]);
    }
    return make_result<T>(a.shape(), std::move(y), {a}, [dfdx](TensorNode<T> & out) {
        auto * gx = input_grad(out, 0);
        if (!gx) {
            return;
        }
        const auto & xv = out.inputs[0]->value;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            (*gx)[i] += out.grad[i] * dfdx(xv[i], out.value[i]);
        }
    });
}

} // namespace

template <typename T>
Tensor<T> add(const Tensor<T> & a, const Tensor<T> & b) {
    require_same(a, b, "add");
    auto x = a.data();
    auto z = b.data();
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = x[i] + z[i];
    }
    return make_result<T>(a.shape(), std::move(y), {a, b}, [](TensorNode<T> & out) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (auto * g = input_grad(out, k)) {
                for (std::size_t i = 0; i < g->size(); ++i) {
                    (*g)[i] += out.grad[i];
                }
            }
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T> & a, const Tensor<T> & b) {
    require_same(a, b, "sub");
    auto x = a.data();
    auto z = b.data();
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = x[i] - z[i];
    }
    return make_result<T>(a.shape(), std::move(y), {a, b}, [](TensorNode<T> & out) {
        if (auto * g = input_grad(out, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += out.grad[i];
            }
        }
        if (auto * g = input_grad(out, 1)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] -= out.grad[i];
            }
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T> & a, const Tensor<T> & b) {
    require_same(a, b, "mul");
    auto x = a.data();
    auto z = b.data();
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = x[i] * z[i];
    }
    return make_result<T>(a.shape(), std::move(y), {a, b}, [](TensorNode<T> & out) {
        const auto & av = out.inputs[0]->value;
        const auto & bv = out.inputs[1]->value;
        if (auto * g = input_grad(out, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += out.grad[i] * bv[i];
            }
        }
        if (auto * g = input_grad(out, 1)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += out.grad[i] * av[i];
            }
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T> & a, T s) {
    return unary<T>(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T> & a, T s) {
    return unary<T>(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> abs(const Tensor<T> & a) {
    return unary<T>(
        a, [](T x) { return std::abs(x); },
        [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T> & a) {
    return unary<T>(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> log(const Tensor<T> & a) {
    return unary<T>(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T> & a) {
    return unary<T>(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T> & a) {
    return unary<T>(a, [](T x) { return kernels::gelu(x); }, [](T x, T) { return kernels::gelu_grad(x); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T> & a, T slope) {
    return unary<T>(
        a, [slope](T x) { return x >= T(0) ? x : slope * x; },
        [slope](T x, T) { return x >= T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T> & a, T floor) {
    return unary<T>(
        a, [floor](T x) { return x > floor ? x : floor; }, [floor](T x, T) { return x > floor ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sum(const Tensor<T> & a) {
    T s = 0;
    for (T v : a.data()) {
        s += v;
    }
    return make_result<T>(Shape{}, {s}, {a}, [](TensorNode<T> & out) {
        if (auto * g = input_grad(out, 0)) {
            for (auto & v : *g) {
                v += out.grad[0];
            }
        }
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T> & a) {
    const std::size_t n = a.numel();
    if (n == 0) {
        throw DimensionError("mean of empty tensor");
    }
    T s = 0;
    for (T v : a.data()) {
        s += v;
    }
    return make_result<T>(Shape{}, {s / static_cast<T>(n)}, {a}, [n](TensorNode<T> & out) {
        if (auto * g = input_grad(out, 0)) {
            const T d = out.grad[0] / static_cast<T>(n);
            for (auto & v : *g) {
                v += d;
            }
        }
    });
}

template <typename T>
Tensor<T> frobenius_norm(const Tensor<T> & a) {
    T s = 0;
    for (T v : a.data()) {
        s += v * v;
    }
    const T norm = std::sqrt(s);
    return make_result<T>(Shape{}, {norm}, {a}, [](TensorNode<T> & out) {
        auto * g = input_grad(out, 0);
        const T n = out.value[0];
        if (!g || n == T(0)) {
            return;
        }
        const auto & x = out.inputs[0]->value;
        const T d = out.grad[0] / n;
        for (std::size_t i = 0; i < x.size(); ++i) {
            (*g)[i] += d * x[i];
        }
    });
}

template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>> & terms) {
    T s = 0;
    for (const auto & t : terms) {
        s += t.item();
    }
    return make_result<T>(Shape{}, {s}, terms, [](TensorNode<T> & out) {
        for (std::size_t k = 0; k < out.inputs.size(); ++k) {
            if (auto * g = input_grad(out, k)) {
                (*g)[0] += out.grad[0];
            }
        }
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T> & a) {
    require_rank(a, 2, "transpose");
    const std::size_t r = a.dim(0), c = a.dim(1);
    auto x = a.data();
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            y[j * r + i] = x[i * c + j];
        }
    }
    return make_result<T>(Shape{c, r}, std::move(y), {a}, [r, c](TensorNode<T> & out) {
        if (auto * g = input_grad(out, 0)) {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    (*g)[i * c + j] += out.grad[j * r + i];
                }
            }
        }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T> & a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
    }
    std::vector<T> y(a.data().begin(), a.data().end());
    return make_result<T>(std::move(shape), std::move(y), {a}, [](TensorNode<T> & out) {
        if (auto * g = input_grad(out, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += out.grad[i];
            }
        }
    });
}

template <typename T>
Tensor<T> matmul(const Tensor<T> & a, const Tensor<T> & b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
    }
    auto av = a.data();
    auto bv = b.data();
    std::vector<T> y(m * n, T(0));
    for (std::size_t i = 0; i < m; ++i) {
        T * yr = y.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T s = av[i * k + p];
            const T * br = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                yr[j] += s * br[j];
            }
        }
    }
    return make_result<T>(Shape{m, n}, std::move(y), {a, b}, [m, k, n](TensorNode<T> & out) {
        const auto & av = out.inputs[0]->value;
        const auto & bv = out.inputs[1]->value;
        const auto & gy = out.grad;
        if (auto * ga = input_grad(out, 0)) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    (*ga)[i * k + p] += kernels::dot(gy.data() + i * n, bv.data() + p * n, n);
                }
            }
        }
        if (auto * gb = input_grad(out, 1)) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const T s = av[i * k + p];
                    T * gr = gb->data() + p * n;
                    const T * gyr = gy.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        gr[j] += s * gyr[j];
                    }
                }
            }
        }
    });
}

template <typename T>
Tensor<T> linear(const Tensor<T> & input, const Tensor<T> & weight, const Tensor<T> & bias) {
    require_rank(input, 2, "linear");
    require_rank(weight, 2, "linear");
    const std::size_t frames = input.dim(0), in = input.dim(1), out_dim = weight.dim(0);
    if (weight.dim(1) != in) {
        throw DimensionError("linear: input " + shape_str(input.shape()) + " vs weight " + shape_str(weight.shape()));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
        throw DimensionError("linear: bias " + shape_str(bias.shape()) + " for " + std::to_string(out_dim) +
                             " outputs");
    }
    auto x = input.data();
    auto w = weight.data();
    const T * b = bias.defined() ? bias.data().data() : nullptr;
    std::vector<T> y(frames * out_dim);
    for (std::size_t f = 0; f < frames; ++f) {
        kernels::linear_row(x.data() + f * in, w.data(), b, in, out_dim, y.data() + f * out_dim);
    }
    return make_result<T>(
        Shape{frames, out_dim}, std::move(y), {input, weight, bias}, [frames, in, out_dim](TensorNode<T> & out) {
            const auto & xv = out.inputs[0]->value;
            const auto & wv = out.inputs[1]->value;
            const auto & gy = out.grad;
            if (auto * gx = input_grad(out, 0)) {
                for (std::size_t f = 0; f < frames; ++f) {
                    T * gxr = gx->data() + f * in;
                    for (std::size_t t = 0; t < out_dim; ++t) {
                        const T g = gy[f * out_dim + t];
                        if (g == T(0)) {
                            continue;
                        }
                        const T * wr = wv.data() + t * in;
                        for (std::size_t s = 0; s < in; ++s) {
                            gxr[s] += g * wr[s];
                        }
                    }
                }
            }
            if (auto * gw = input_grad(out, 1)) {
                for (std::size_t f = 0; f < frames; ++f) {
                    const T * xr = xv.data() + f * in;
                    for (std::size_t t = 0; t < out_dim; ++t) {
                        const T g = gy[f * out_dim + t];
                        if (g == T(0)) {
                            continue;
                        }
                        T * gwr = gw->data() + t * in;
                        for (std::size_t s = 0; s < in; ++s) {
                            gwr[s] += g * xr[s];
                        }
                    }
                }
            }
            if (out.inputs[2]) {
                if (auto * gb = input_grad(out, 2)) {
                    for (std::size_t f = 0; f < frames; ++f) {
                        for (std::size_t t = 0; t < out_dim; ++t) {
                            (*gb)[t] += gy[f * out_dim + t];
                        }
                    }
                }
            }
        });
}

namespace {

std::size_t left_pad(std::size_t k, Padding padding) { return padding == Padding::causal ? k - 1 : (k - 1) / 2; }

template <typename T>
void gather_conv_col(const T * x, std::size_t c_in, std::size_t frames, std::size_t k, std::ptrdiff_t start, T * col) {
    for (std::size_t ci = 0; ci < c_in; ++ci) {
        const T * xr = x + ci * frames;
        T * cr = col + ci * k;
        for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
            cr[j] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(frames)) ? xr[pos] : T(0);
        }
    }
}

} // namespace

template <typename T>
Tensor<T> conv1d(const Tensor<T> & input, const Tensor<T> & kernel, const Tensor<T> & bias, std::size_t stride,
                 std::size_t groups, Padding padding) {
    require_rank(input, 2, "conv1d");
    require_rank(kernel, 3, "conv1d");
    if (stride < 1 || groups < 1) {
        throw ConfigError("conv1d: stride and groups must be >= 1");
    }
    const std::size_t c_in = input.dim(0), frames = input.dim(1);
    const std::size_t c_out = kernel.dim(0), cig = kernel.dim(1), k = kernel.dim(2);
    if (k < 1) {
        throw ConfigError("conv1d: kernel size must be >= 1");
    }
    if (c_in % groups != 0 || c_out % groups != 0) {
        throw ConfigError("conv1d: channels " + std::to_string(c_in) + "->" + std::to_string(c_out) +
                          " not divisible by groups " + std::to_string(groups));
    }
    if (cig * groups != c_in) {
        throw DimensionError("conv1d: input " + shape_str(input.shape()) + " incompatible with kernel " +
                             shape_str(kernel.shape()) + " and groups " + std::to_string(groups));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
        throw DimensionError("conv1d: bias " + shape_str(bias.shape()));
    }
    const std::size_t out_frames = (frames + stride - 1) / stride;
    const std::size_t pad = left_pad(k, padding);
    auto x = input.data();
    auto w = kernel.data();
    const T * b = bias.defined() ? bias.data().data() : nullptr;
    std::vector<T> y(c_out * out_frames);
    std::vector<T> col(c_in * k), ycol(c_out);
    for (std::size_t t = 0; t < out_frames; ++t) {
        gather_conv_col(x.data(), c_in, frames, k, static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(pad),
                        col.data());
        kernels::conv1d_frame(col.data(), w.data(), b, c_in, c_out, k, groups, ycol.data());
        for (std::size_t co = 0; co < c_out; ++co) {
            y[co * out_frames + t] = ycol[co];
        }
    }
    return make_result<T>(
        Shape{c_out, out_frames}, std::move(y), {input, kernel, bias},
        [=](TensorNode<T> & out) {
            const auto & xv = out.inputs[0]->value;
            const auto & wv = out.inputs[1]->value;
            auto * gx = input_grad(out, 0);
            auto * gw = input_grad(out, 1);
            auto * gb = out.inputs[2] ? input_grad(out, 2) : nullptr;
            const std::size_t cog = c_out / groups;
            const std::size_t span = cig * k;
            std::vector<T> col(c_in * k), gcol(c_in * k);
            for (std::size_t t = 0; t < out_frames; ++t) {
                const std::ptrdiff_t start =
                    static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(pad);
                if (gw) {
                    gather_conv_col(xv.data(), c_in, frames, k, start, col.data());
                }
                std::fill(gcol.begin(), gcol.end(), T(0));
                for (std::size_t co = 0; co < c_out; ++co) {
                    const T g = out.grad[co * out_frames + t];
                    if (g == T(0)) {
                        continue;
                    }
                    const std::size_t off = (co / cog) * span;
                    if (gb) {
                        (*gb)[co] += g;
                    }
                    if (gw) {
                        T * gwr = gw->data() + co * span;
                        for (std::size_t j = 0; j < span; ++j) {
                            gwr[j] += g * col[off + j];
                        }
                    }
                    if (gx) {
                        const T * wr = wv.data() + co * span;
                        for (std::size_t j = 0; j < span; ++j) {
                            gcol[off + j] += g * wr[j];
                        }
                    }
                }
                if (gx) {
                    for (std::size_t ci = 0; ci < c_in; ++ci) {
                        for (std::size_t j = 0; j < k; ++j) {
                            const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
                            if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(frames)) {
                                (*gx)[ci * frames + pos] += gcol[ci * k + j];
                            }
                        }
                    }
                }
            }
        });
}

using kernels::TransposeGeometry;

template <typename T>
std::vector<std::vector<T>> transpose_phase_weights(const T * w, std::size_t c_in, std::size_t c_out, std::size_t k,
                                                    std::size_t stride, std::size_t pad) {
    TransposeGeometry geo{stride, k, pad, (k + stride - 1) / stride};
    std::vector<std::vector<T>> phases(stride, std::vector<T>(c_out * c_in * geo.taps, T(0)));
    for (std::size_t q = 0; q < stride; ++q) {
        for (std::size_t co = 0; co < c_out; ++co) {
            for (std::size_t ci = 0; ci < c_in; ++ci) {
                for (std::size_t m = 0; m < geo.taps; ++m) {
                    const std::size_t kk = q + m * stride;
                    if (kk < k) {
                        phases[q][co * c_in * geo.taps + ci * geo.taps + m] = w[(ci * c_out + co) * k + kk];
                    }
                }
            }
        }
    }
    return phases;
}

template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T> & input, const Tensor<T> & kernel, const Tensor<T> & bias,
                           std::size_t stride, Padding padding) {
    require_rank(input, 2, "conv_transpose1d");
    require_rank(kernel, 3, "conv_transpose1d");
    if (stride < 1) {
        throw ConfigError("conv_transpose1d: stride must be >= 1");
    }
    const std::size_t c_in = input.dim(0), frames = input.dim(1);
    const std::size_t c_out = kernel.dim(1), k = kernel.dim(2);
    if (k < 1) {
        throw ConfigError("conv_transpose1d: kernel size must be >= 1");
    }
    if (kernel.dim(0) != c_in) {
        throw DimensionError("conv_transpose1d: input " + shape_str(input.shape()) + " vs kernel " +
                             shape_str(kernel.shape()));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
        throw DimensionError("conv_transpose1d: bias " + shape_str(bias.shape()));
    }
    const std::size_t pad = padding == Padding::causal ? 0 : (k > stride ? (k - stride) / 2 : 0);
    const TransposeGeometry geo{stride, k, pad, (k + stride - 1) / stride};
    const std::size_t out_frames = frames * stride;
    const auto phases = transpose_phase_weights(kernel.data().data(), c_in, c_out, k, stride, pad);
    auto x = input.data();
    const T * b = bias.defined() ? bias.data().data() : nullptr;
    std::vector<T> y(c_out * out_frames);
    std::vector<T> col(c_in * geo.taps), ycol(c_out);
    for (std::size_t j = 0; j < out_frames; ++j) {
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            for (std::size_t m = 0; m < geo.taps; ++m) {
                col[ci * geo.taps + m] = geo.valid(j, m, frames) ? x[ci * frames + geo.source(j, m)] : T(0);
            }
        }
        kernels::conv_transpose1d_frame(col.data(), phases[(j + pad) % stride].data(), b, c_in, c_out, geo.taps,
                                        ycol.data());
        for (std::size_t co = 0; co < c_out; ++co) {
            y[co * out_frames + j] = ycol[co];
        }
    }
    return make_result<T>(
        Shape{c_out, out_frames}, std::move(y), {input, kernel, bias}, [=](TensorNode<T> & out) {
            const auto & xv = out.inputs[0]->value;
            const auto & wv = out.inputs[1]->value;
            auto * gx = input_grad(out, 0);
            auto * gw = input_grad(out, 1);
            auto * gb = out.inputs[2] ? input_grad(out, 2) : nullptr;
            for (std::size_t j = 0; j < out_frames; ++j) {
                for (std::size_t co = 0; co < c_out; ++co) {
                    const T g = out.grad[co * out_frames + j];
                    if (g == T(0)) {
                        continue;
                    }
                    if (gb) {
                        (*gb)[co] += g;
                    }
                    for (std::size_t m = 0; m < geo.taps; ++m) {
                        if (!geo.valid(j, m, frames)) {
                            continue;
                        }
                        const std::size_t kk = geo.tap(j, m);
                        const std::ptrdiff_t i = geo.source(j, m);
                        for (std::size_t ci = 0; ci < c_in; ++ci) {
                            const std::size_t widx = (ci * c_out + co) * k + kk;
                            if (gw) {
                                (*gw)[widx] += g * xv[ci * frames + i];
                            }
                            if (gx) {
                                (*gx)[ci * frames + i] += g * wv[widx];
                            }
                        }
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T> & input, const Tensor<T> & kernel, const Tensor<T> & bias, std::size_t stride_h,
                 std::size_t stride_w, std::size_t pad_h, std::size_t pad_w) {
    require_rank(input, 3, "conv2d");
    require_rank(kernel, 4, "conv2d");
    const std::size_t c_in = input.dim(0), h = input.dim(1), wd = input.dim(2);
    const std::size_t c_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kernel.dim(1) != c_in) {
        throw DimensionError("conv2d: input " + shape_str(input.shape()) + " vs kernel " + shape_str(kernel.shape()));
    }
    if (stride_h < 1 || stride_w < 1) {
        throw ConfigError("conv2d: strides must be >= 1");
    }
    if (h + 2 * pad_h < kh || wd + 2 * pad_w < kw) {
        throw DimensionError("conv2d: input " + shape_str(input.shape()) + " smaller than kernel");
    }
    const std::size_t oh = (h + 2 * pad_h - kh) / stride_h + 1;
    const std::size_t ow = (wd + 2 * pad_w - kw) / stride_w + 1;
    auto x = input.data();
    auto w = kernel.data();
    std::vector<T> y(c_out * oh * ow, T(0));
    for (std::size_t co = 0; co < c_out; ++co) {
        T * yp = y.data() + co * oh * ow;
        if (bias.defined()) {
            std::fill(yp, yp + oh * ow, bias.data()[co]);
        }
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            const T * xp = x.data() + ci * h * wd;
            for (std::size_t a = 0; a < kh; ++a) {
                for (std::size_t c = 0; c < kw; ++c) {
                    const T wv = w[((co * c_in + ci) * kh + a) * kw + c];
                    for (std::size_t r = 0; r < oh; ++r) {
                        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(r * stride_h + a) -
                                                  static_cast<std::ptrdiff_t>(pad_h);
                        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) {
                            continue;
                        }
                        const T * xr = xp + ih * wd;
                        T * yr = yp + r * ow;
                        for (std::size_t s = 0; s < ow; ++s) {
                            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(s * stride_w + c) -
                                                      static_cast<std::ptrdiff_t>(pad_w);
                            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(wd)) {
                                yr[s] += wv * xr[iw];
                            }
                        }
                    }
                }
            }
        }
    }
    return make_result<T>(
        Shape{c_out, oh, ow}, std::move(y), {input, kernel, bias}, [=](TensorNode<T> & out) {
            const auto & xv = out.inputs[0]->value;
            const auto & wv = out.inputs[1]->value;
            auto * gx = input_grad(out, 0);
            auto * gw = input_grad(out, 1);
            auto * gb = out.inputs[2] ? input_grad(out, 2) : nullptr;
            for (std::size_t co = 0; co < c_out; ++co) {
                const T * gp = out.grad.data() + co * oh * ow;
                if (gb) {
                    for (std::size_t i = 0; i < oh * ow; ++i) {
                        (*gb)[co] += gp[i];
                    }
                }
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    for (std::size_t a = 0; a < kh; ++a) {
                        for (std::size_t c = 0; c < kw; ++c) {
                            const std::size_t widx = ((co * c_in + ci) * kh + a) * kw + c;
                            T gwacc = 0;
                            const T wval = wv[widx];
                            for (std::size_t r = 0; r < oh; ++r) {
                                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(r * stride_h + a) -
                                                          static_cast<std::ptrdiff_t>(pad_h);
                                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) {
                                    continue;
                                }
                                const std::size_t xoff = (ci * h + ih) * wd;
                                const T * gr = gp + r * ow;
                                for (std::size_t s = 0; s < ow; ++s) {
                                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(s * stride_w + c) -
                                                              static_cast<std::ptrdiff_t>(pad_w);
                                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wd)) {
                                        continue;
                                    }
                                    gwacc += gr[s] * xv[xoff + iw];
                                    if (gx) {
                                        (*gx)[xoff + iw] += gr[s] * wval;
                                    }
                                }
                            }
                            if (gw) {
                                (*gw)[widx] += gwacc;
                            }
                        }
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T> & input, const Tensor<T> & gamma, const Tensor<T> & beta, T eps) {
    require_rank(input, 2, "layer_norm");
    const std::size_t frames = input.dim(0), c = input.dim(1);
    if (c < 1 || gamma.numel() != c || beta.numel() != c) {
        throw DimensionError("layer_norm: affine parameters do not match " + shape_str(input.shape()));
    }
    auto x = input.data();
    std::vector<T> y(x.size());
    std::vector<T> stats(2 * frames);
    for (std::size_t f = 0; f < frames; ++f) {
        kernels::layer_norm_row(x.data() + f * c, gamma.data().data(), beta.data().data(), c, eps, y.data() + f * c,
                                &stats[2 * f], &stats[2 * f + 1]);
    }
    return make_result<T>(
        input.shape(), std::move(y), {input, gamma, beta},
        [frames, c, stats = std::move(stats)](TensorNode<T> & out) {
            const auto & xv = out.inputs[0]->value;
            const auto & gv = out.inputs[1]->value;
            auto * gx = input_grad(out, 0);
            auto * gg = input_grad(out, 1);
            auto * gbeta = input_grad(out, 2);
            std::vector<T> xhat(c), gxhat(c);
            for (std::size_t f = 0; f < frames; ++f) {
                const T mu = stats[2 * f], rstd = stats[2 * f + 1];
                const T * gy = out.grad.data() + f * c;
                T m1 = 0, m2 = 0;
                for (std::size_t i = 0; i < c; ++i) {
                    xhat[i] = (xv[f * c + i] - mu) * rstd;
                    gxhat[i] = gy[i] * gv[i];
                    m1 += gxhat[i];
                    m2 += gxhat[i] * xhat[i];
                    if (gg) {
                        (*gg)[i] += gy[i] * xhat[i];
                    }
                    if (gbeta) {
                        (*gbeta)[i] += gy[i];
                    }
                }
                if (gx) {
                    m1 /= static_cast<T>(c);
                    m2 /= static_cast<T>(c);
                    for (std::size_t i = 0; i < c; ++i) {
                        (*gx)[f * c + i] += rstd * (gxhat[i] - m1 - xhat[i] * m2);
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> grn(const Tensor<T> & input, const Tensor<T> & gamma, const Tensor<T> & beta, GrnMode mode, T eps) {
    require_rank(input, 2, "grn");
    const std::size_t frames = input.dim(0), c = input.dim(1);
    if (gamma.numel() != c || beta.numel() != c) {
        throw DimensionError("grn: affine parameters do not match " + shape_str(input.shape()));
    }
    auto x = input.data();
    std::vector<T> y(x.size());
    // per-row channel norms G and their mean
    const std::size_t rows = mode == GrnMode::cumulative ? frames : (frames ? 1 : 0);
    std::vector<T> gnorm(rows * c), gmean(rows);
    std::vector<T> sumsq(c, T(0));
    if (mode == GrnMode::global) {
        for (std::size_t f = 0; f < frames; ++f) {
            for (std::size_t i = 0; i < c; ++i) {
                sumsq[i] += x[f * c + i] * x[f * c + i];
            }
        }
    }
    for (std::size_t f = 0; f < frames; ++f) {
        if (mode == GrnMode::cumulative) {
            for (std::size_t i = 0; i < c; ++i) {
                sumsq[i] += x[f * c + i] * x[f * c + i];
            }
        }
        const std::size_t r = mode == GrnMode::cumulative ? f : 0;
        kernels::grn_row(x.data() + f * c, sumsq.data(), gamma.data().data(), beta.data().data(), c, eps,
                         y.data() + f * c, static_cast<T *>(nullptr), gnorm.data() + r * c, gmean.data() + r);
    }
    return make_result<T>(
        input.shape(), std::move(y), {input, gamma, beta},
        [=, gnorm = std::move(gnorm), gmean = std::move(gmean)](TensorNode<T> & out) {
            const auto & xv = out.inputs[0]->value;
            const auto & gv = out.inputs[1]->value;
            auto * gx = input_grad(out, 0);
            auto * gg = input_grad(out, 1);
            auto * gbeta = input_grad(out, 2);
            // dL/dS accumulated per row of norms
            std::vector<T> ds(rows * c, T(0));
            std::vector<T> gn(c);
            for (std::size_t f = 0; f < frames; ++f) {
                const std::size_t r = mode == GrnMode::cumulative ? f : 0;
                const T * gr = gnorm.data() + r * c;
                const T denom = gmean[r] + eps;
                const T * gy = out.grad.data() + f * c;
                T cross = 0;
                for (std::size_t i = 0; i < c; ++i) {
                    const T n = gr[i] / denom;
                    const T xi = xv[f * c + i];
                    if (gx) {
                        (*gx)[f * c + i] += gy[i] * (gv[i] * n + T(1));
                    }
                    if (gg) {
                        (*gg)[i] += gy[i] * xi * n;
                    }
                    if (gbeta) {
                        (*gbeta)[i] += gy[i];
                    }
                    gn[i] = gy[i] * gv[i] * xi;
                    cross += gn[i] * gr[i];
                }
                if (!gx) {
                    continue;
                }
                const T corr = cross / (denom * denom * static_cast<T>(c));
                for (std::size_t i = 0; i < c; ++i) {
                    const T dg = gn[i] / denom - corr;
                    if (gr[i] > T(0)) {
                        ds[r * c + i] += dg / (T(2) * gr[i]);
                    }
                }
            }
            if (!gx) {
                return;
            }
            if (mode == GrnMode::cumulative) {
                // S[f] = sum_{f' <= f} x[f']^2  ->  reverse cumulative sum
                std::vector<T> acc(c, T(0));
                for (std::size_t f = frames; f-- > 0;) {
                    for (std::size_t i = 0; i < c; ++i) {
                        acc[i] += ds[f * c + i];
                        (*gx)[f * c + i] += T(2) * xv[f * c + i] * acc[i];
                    }
                }
            } else {
                for (std::size_t f = 0; f < frames; ++f) {
                    for (std::size_t i = 0; i < c; ++i) {
                        (*gx)[f * c + i] += T(2) * xv[f * c + i] * ds[i];
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> straight_through(const Tensor<T> & input, const std::vector<T> & values) {
    if (values.size() != input.numel()) {
        throw DimensionError("straight_through: value count mismatch");
    }
    return make_result<T>(input.shape(), values, {input}, [](TensorNode<T> & out) {
        if (auto * g = input_grad(out, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += out.grad[i];
            }
        }
    });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T> & table, const std::vector<std::size_t> & indices) {
    require_rank(table, 2, "gather_rows");
    const std::size_t rows = table.dim(0), d = table.dim(1);
    auto tv = table.data();
    std::vector<T> y(indices.size() * d);
    for (std::size_t n = 0; n < indices.size(); ++n) {
        if (indices[n] >= rows) {
            throw DimensionError("gather_rows: index " + std::to_string(indices[n]) + " out of range");
        }
        std::copy_n(tv.data() + indices[n] * d, d, y.data() + n * d);
    }
    return make_result<T>(Shape{indices.size(), d}, std::move(y), {table}, [indices, d](TensorNode<T> & out) {
        if (auto * g = input_grad(out, 0)) {
            for (std::size_t n = 0; n < indices.size(); ++n) {
                for (std::size_t i = 0; i < d; ++i) {
                    (*g)[indices[n] * d + i] += out.grad[n * d + i];
                }
            }
        }
    });
}

template <typename T>
Tensor<T> mean_abs_error(const Tensor<T> & a, const Tensor<T> & b) {
    require_same(a, b, "mean_abs_error");
    const std::size_t n = a.numel();
    if (n == 0) {
        throw DimensionError("mean_abs_error of empty tensors");
    }
    auto x = a.data();
    auto z = b.data();
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        s += std::abs(x[i] - z[i]);
    }
    return make_result<T>(Shape{}, {s / static_cast<T>(n)}, {a, b}, [n](TensorNode<T> & out) {
        const auto & xv = out.inputs[0]->value;
        const auto & zv = out.inputs[1]->value;
        const T d = out.grad[0] / static_cast<T>(n);
        auto * ga = input_grad(out, 0);
        auto * gb = input_grad(out, 1);
        for (std::size_t i = 0; i < n; ++i) {
            const T diff = xv[i] - zv[i];
            const T sg = diff > T(0) ? d : (diff < T(0) ? -d : T(0));
            if (ga) {
                (*ga)[i] += sg;
            }
            if (gb) {
                (*gb)[i] -= sg;
            }
        }
    });
}

#define SC2_INSTANTIATE_OPS(T)                                                                                         \
    template Tensor<T> add(const Tensor<T> &, const Tensor<T> &);                                                      \
    template Tensor<T> sub(const Tensor<T> &, const Tensor<T> &);                                                      \
    template Tensor<T> mul(const Tensor<T> &, const Tensor<T> &);                                                      \
    template Tensor<T> scale(const Tensor<T> &, T);                                                                    \
    template Tensor<T> add_scalar(const Tensor<T> &, T);                                                               \
    template Tensor<T> abs(const Tensor<T> &);                                                                         \
    template Tensor<T> square(const Tensor<T> &);                                                                      \
    template Tensor<T> log(const Tensor<T> &);                                                                         \
    template Tensor<T> tanh(const Tensor<T> &);                                                                        \
    template Tensor<T> gelu(const Tensor<T> &);                                                                        \
    template Tensor<T> leaky_relu(const Tensor<T> &, T);                                                               \
    template Tensor<T> clamp_min(const Tensor<T> &, T);                                                                \
    template Tensor<T> sum(const Tensor<T> &);                                                                         \
    template Tensor<T> mean(const Tensor<T> &);                                                                        \
    template Tensor<T> frobenius_norm(const Tensor<T> &);                                                              \
    template Tensor<T> add_n(const std::vector<Tensor<T>> &);                                                          \
    template Tensor<T> transpose(const Tensor<T> &);                                                                   \
    template Tensor<T> reshape(const Tensor<T> &, Shape);                                                              \
    template Tensor<T> matmul(const Tensor<T> &, const Tensor<T> &);                                                   \
    template Tensor<T> linear(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &);                                \
    template Tensor<T> conv1d(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, std::size_t, std::size_t,       \
                              Padding);                                                                                \
    template Tensor<T> conv_transpose1d(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, std::size_t,          \
                                        Padding);                                                                      \
    template Tensor<T> conv2d(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, std::size_t, std::size_t,       \
                              std::size_t, std::size_t);                                                               \
    template Tensor<T> layer_norm(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, T);                         \
    template Tensor<T> grn(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, GrnMode, T);                       \
    template Tensor<T> straight_through(const Tensor<T> &, const std::vector<T> &);                                    \
    template Tensor<T> gather_rows(const Tensor<T> &, const std::vector<std::size_t> &);                               \
    template Tensor<T> mean_abs_error(const Tensor<T> &, const Tensor<T> &);                                           \
    template std::vector<std::vector<T>> transpose_phase_weights(const T *, std::size_t, std::size_t, std::size_t,     \
                                                                 std::size_t, std::size_t);

SC2_INSTANTIATE_OPS(float)
SC2_INSTANTIATE_OPS(double)

#undef SC2_INSTANTIATE_OPS

} // namespace sc2::ops
