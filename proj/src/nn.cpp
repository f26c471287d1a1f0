#include "fewrec/nn.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>

namespace fewrec::nn {

namespace {

void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
           int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
                ldc);
}

inline int conv_out(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// im2col for a single sample: x [C,H,W] -> col [C*k*k, Ho*Wo]
void im2col2d(const double* x, int c, int h, int w, int k, int stride, int pad, double* col) {
    int ho = conv_out(h, k, stride, pad);
    int wo = conv_out(w, k, stride, pad);
    int cols = ho * wo;
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * cols;
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        std::memset(row + oy * wo, 0, sizeof(double) * wo);
                        continue;
                    }
                    const double* src = x + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride - pad + kx;
                        row[oy * wo + ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im2d(const double* col, int c, int h, int w, int k, int stride, int pad, double* x) {
    int ho = conv_out(h, k, stride, pad);
    int wo = conv_out(w, k, stride, pad);
    int cols = ho * wo;
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * cols;
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    double* dst = x + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += row[oy * wo + ox];
                    }
                }
            }
        }
    }
}

// x [C,D,H,W] -> col [C*k^3, Do*Ho*Wo]
void im2col3d(const double* x, int c, int d, int h, int w, int k, int stride, int pad,
              double* col) {
    int dout = conv_out(d, k, stride, pad);
    int ho = conv_out(h, k, stride, pad);
    int wo = conv_out(w, k, stride, pad);
    int cols = dout * ho * wo;
    for (int ci = 0; ci < c; ++ci) {
        for (int kz = 0; kz < k; ++kz) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    std::size_t r = ((static_cast<std::size_t>(ci) * k + kz) * k + ky) * k + kx;
                    double* row = col + r * cols;
                    for (int oz = 0; oz < dout; ++oz) {
                        int iz = oz * stride - pad + kz;
                        for (int oy = 0; oy < ho; ++oy) {
                            int iy = oy * stride - pad + ky;
                            double* out = row + (static_cast<std::size_t>(oz) * ho + oy) * wo;
                            if (iz < 0 || iz >= d || iy < 0 || iy >= h) {
                                std::memset(out, 0, sizeof(double) * wo);
                                continue;
                            }
                            const double* src =
                                x + ((static_cast<std::size_t>(ci) * d + iz) * h + iy) * w;
                            for (int ox = 0; ox < wo; ++ox) {
                                int ix = ox * stride - pad + kx;
                                out[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
                            }
                        }
                    }
                }
            }
        }
    }
}

void col2im3d(const double* col, int c, int d, int h, int w, int k, int stride, int pad,
              double* x) {
    int dout = conv_out(d, k, stride, pad);
    int ho = conv_out(h, k, stride, pad);
    int wo = conv_out(w, k, stride, pad);
    int cols = dout * ho * wo;
    for (int ci = 0; ci < c; ++ci) {
        for (int kz = 0; kz < k; ++kz) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    std::size_t r = ((static_cast<std::size_t>(ci) * k + kz) * k + ky) * k + kx;
                    const double* row = col + r * cols;
                    for (int oz = 0; oz < dout; ++oz) {
                        int iz = oz * stride - pad + kz;
                        if (iz < 0 || iz >= d) continue;
                        for (int oy = 0; oy < ho; ++oy) {
                            int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            const double* src = row + (static_cast<std::size_t>(oz) * ho + oy) * wo;
                            double* dst = x + ((static_cast<std::size_t>(ci) * d + iz) * h + iy) * w;
                            for (int ox = 0; ox < wo; ++ox) {
                                int ix = ox * stride - pad + kx;
                                if (ix >= 0 && ix < w) dst[ix] += src[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

double uniform_fan_in_bound(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

void init_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.vec()) v = dist(rng);
}

void init_normal(Tensor& t, double mean, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(mean, stddev);
    for (auto& v : t.vec()) v = dist(rng);
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int in_c_, int out_c_, int k_,
               int stride_, int pad_, std::mt19937_64& rng)
    : in_c(in_c_), out_c(out_c_), k(k_), stride(stride_), pad(pad_) {
    w_ = &ps.create(name + "/weight", {out_c, in_c * k * k});
    b_ = &ps.create(name + "/bias", {out_c});
    init_uniform(w_->value, uniform_fan_in_bound(in_c * k * k), rng);
    init_uniform(b_->value, uniform_fan_in_bound(in_c * k * k), rng);
}

Tensor Conv2d::forward(const Tensor& x) {
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (c != in_c) throw DataError("Conv2d: channel mismatch");
    int ho = conv_out(h, k, stride, pad), wo = conv_out(w, k, stride, pad);
    in_shape_ = x.shape();
    cols_.assign(n, Tensor({in_c * k * k, ho * wo}));
    Tensor y({n, out_c, ho, wo});
    int cols = ho * wo;
    for (int i = 0; i < n; ++i) {
        im2col2d(x.data() + static_cast<std::size_t>(i) * c * h * w, c, h, w, k, stride, pad,
                 cols_[i].data());
        double* out = y.data() + static_cast<std::size_t>(i) * out_c * cols;
        dgemm(false, false, out_c, cols, in_c * k * k, 1.0, w_->value.data(), in_c * k * k,
              cols_[i].data(), cols, 0.0, out, cols);
        for (int o = 0; o < out_c; ++o) {
            double bias = b_->value[o];
            double* row = out + static_cast<std::size_t>(o) * cols;
            for (int j = 0; j < cols; ++j) row[j] += bias;
        }
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    int n = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    int ho = conv_out(h, k, stride, pad), wo = conv_out(w, k, stride, pad);
    int cols = ho * wo;
    Tensor dx(in_shape_);
    Tensor dcol({in_c * k * k, cols});
    for (int i = 0; i < n; ++i) {
        const double* g = dy.data() + static_cast<std::size_t>(i) * out_c * cols;
        // dW += g * col^T
        dgemm(false, true, out_c, in_c * k * k, cols, 1.0, g, cols, cols_[i].data(), cols, 1.0,
              w_->grad.data(), in_c * k * k);
        for (int o = 0; o < out_c; ++o) {
            double s = 0.0;
            const double* row = g + static_cast<std::size_t>(o) * cols;
            for (int j = 0; j < cols; ++j) s += row[j];
            b_->grad[o] += s;
        }
        // dcol = W^T * g
        dgemm(true, false, in_c * k * k, cols, out_c, 1.0, w_->value.data(), in_c * k * k, g,
              cols, 0.0, dcol.data(), cols);
        col2im2d(dcol.data(), c, h, w, k, stride, pad,
                 dx.data() + static_cast<std::size_t>(i) * c * h * w);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Conv3d

Conv3d::Conv3d(ParamStore& ps, const std::string& name, int in_c_, int out_c_, int k_,
               int stride_, int pad_, std::mt19937_64& rng)
    : in_c(in_c_), out_c(out_c_), k(k_), stride(stride_), pad(pad_) {
    int fan_in = in_c * k * k * k;
    w_ = &ps.create(name + "/weight", {out_c, fan_in});
    b_ = &ps.create(name + "/bias", {out_c});
    init_uniform(w_->value, uniform_fan_in_bound(fan_in), rng);
    init_uniform(b_->value, uniform_fan_in_bound(fan_in), rng);
}

Tensor Conv3d::forward(const Tensor& x) {
    int n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
    if (c != in_c) throw DataError("Conv3d: channel mismatch");
    int dout = conv_out(d, k, stride, pad), ho = conv_out(h, k, stride, pad),
        wo = conv_out(w, k, stride, pad);
    in_shape_ = x.shape();
    int kk = in_c * k * k * k;
    int cols = dout * ho * wo;
    cols_.assign(n, Tensor({kk, cols}));
    Tensor y({n, out_c, dout, ho, wo});
    std::size_t in_stride = static_cast<std::size_t>(c) * d * h * w;
    for (int i = 0; i < n; ++i) {
        im2col3d(x.data() + i * in_stride, c, d, h, w, k, stride, pad, cols_[i].data());
        double* out = y.data() + static_cast<std::size_t>(i) * out_c * cols;
        dgemm(false, false, out_c, cols, kk, 1.0, w_->value.data(), kk, cols_[i].data(), cols,
              0.0, out, cols);
        for (int o = 0; o < out_c; ++o) {
            double bias = b_->value[o];
            double* row = out + static_cast<std::size_t>(o) * cols;
            for (int j = 0; j < cols; ++j) row[j] += bias;
        }
    }
    return y;
}

Tensor Conv3d::backward(const Tensor& dy) {
    int n = in_shape_[0], c = in_shape_[1], d = in_shape_[2], h = in_shape_[3], w = in_shape_[4];
    int dout = conv_out(d, k, stride, pad), ho = conv_out(h, k, stride, pad),
        wo = conv_out(w, k, stride, pad);
    int kk = in_c * k * k * k;
    int cols = dout * ho * wo;
    Tensor dx(in_shape_);
    Tensor dcol({kk, cols});
    std::size_t in_stride = static_cast<std::size_t>(c) * d * h * w;
    for (int i = 0; i < n; ++i) {
        const double* g = dy.data() + static_cast<std::size_t>(i) * out_c * cols;
        dgemm(false, true, out_c, kk, cols, 1.0, g, cols, cols_[i].data(), cols, 1.0,
              w_->grad.data(), kk);
        for (int o = 0; o < out_c; ++o) {
            double s = 0.0;
            const double* row = g + static_cast<std::size_t>(o) * cols;
            for (int j = 0; j < cols; ++j) s += row[j];
            b_->grad[o] += s;
        }
        dgemm(true, false, kk, cols, out_c, 1.0, w_->value.data(), kk, g, cols, 0.0, dcol.data(),
              cols);
        col2im3d(dcol.data(), c, d, h, w, k, stride, pad, dx.data() + i * in_stride);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNorm::BatchNorm(ParamStore& ps, const std::string& name, int channels_, double eps_,
                     double momentum_)
    : channels(channels_), eps(eps_), momentum(momentum_), layer_id(name) {
    running_mean_ = &ps.create(name + "/running_mean", {channels}, /*trainable=*/false);
    running_var_ = &ps.create(name + "/running_var", {channels}, /*trainable=*/false);
    for (int c = 0; c < channels; ++c) running_var_->value[c] = 1.0;
}

Tensor BatchNorm::forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          bool training) {
    std::size_t total = x.numel();
    int n = x.dim(0);
    int spatial = static_cast<int>(total / (static_cast<std::size_t>(n) * channels));
    n_ = n;
    spatial_ = spatial;
    training_ = training;
    gamma_cache_ = gamma;
    xhat_ = Tensor({n, channels, spatial});
    invstd_.assign(channels, 0.0);

    const double* xd = x.data();
    if (training) {
        const double m = static_cast<double>(n) * spatial;
        for (int c = 0; c < channels; ++c) {
            double mean = 0.0;
            for (int i = 0; i < n; ++i) {
                const double* src = xd + (static_cast<std::size_t>(i) * channels + c) * spatial;
                for (int s = 0; s < spatial; ++s) mean += src[s];
            }
            mean /= m;
            double var = 0.0;
            for (int i = 0; i < n; ++i) {
                const double* src = xd + (static_cast<std::size_t>(i) * channels + c) * spatial;
                for (int s = 0; s < spatial; ++s) {
                    double d = src[s] - mean;
                    var += d * d;
                }
            }
            var /= m;
            invstd_[c] = 1.0 / std::sqrt(var + eps);
            running_mean_->value[c] =
                (1.0 - momentum) * running_mean_->value[c] + momentum * mean;
            running_var_->value[c] = (1.0 - momentum) * running_var_->value[c] + momentum * var;
            for (int i = 0; i < n; ++i) {
                const double* src = xd + (static_cast<std::size_t>(i) * channels + c) * spatial;
                double* dst = xhat_.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
                for (int s = 0; s < spatial; ++s) dst[s] = (src[s] - mean) * invstd_[c];
            }
        }
    } else {
        for (int c = 0; c < channels; ++c) {
            double mean = running_mean_->value[c];
            invstd_[c] = 1.0 / std::sqrt(running_var_->value[c] + eps);
            for (int i = 0; i < n; ++i) {
                const double* src = xd + (static_cast<std::size_t>(i) * channels + c) * spatial;
                double* dst = xhat_.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
                for (int s = 0; s < spatial; ++s) dst[s] = (src[s] - mean) * invstd_[c];
            }
        }
    }

    Tensor y(x.shape());
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < channels; ++c) {
            double g = gamma[static_cast<std::size_t>(i) * channels + c];
            double b = beta[static_cast<std::size_t>(i) * channels + c];
            const double* src = xhat_.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
            double* dst = y.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
            for (int s = 0; s < spatial; ++s) dst[s] = g * src[s] + b;
        }
    }
    return y;
}

Tensor BatchNorm::backward(const Tensor& dy, Tensor& dgamma, Tensor& dbeta) {
    int n = n_, spatial = spatial_;
    dgamma = Tensor({n, channels});
    dbeta = Tensor({n, channels});
    Tensor dx(dy.shape());

    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < channels; ++c) {
            const double* g = dy.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
            const double* xh = xhat_.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
            double sg = 0.0, sb = 0.0;
            for (int s = 0; s < spatial; ++s) {
                sg += g[s] * xh[s];
                sb += g[s];
            }
            dgamma[static_cast<std::size_t>(i) * channels + c] = sg;
            dbeta[static_cast<std::size_t>(i) * channels + c] = sb;
        }
    }

    if (!training_) {
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < channels; ++c) {
                double scale = gamma_cache_[static_cast<std::size_t>(i) * channels + c] * invstd_[c];
                const double* g = dy.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
                double* d = dx.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
                for (int s = 0; s < spatial; ++s) d[s] = g[s] * scale;
            }
        }
        return dx;
    }

    // Training mode: batch statistics couple all samples of a channel.
    // dxhat = dy * gamma;  dx = invstd/m * (m*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
    const double m = static_cast<double>(n) * spatial;
    for (int c = 0; c < channels; ++c) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int i = 0; i < n; ++i) {
            double gm = gamma_cache_[static_cast<std::size_t>(i) * channels + c];
            const double* g = dy.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
            const double* xh = xhat_.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
            for (int s = 0; s < spatial; ++s) {
                double dxh = g[s] * gm;
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xh[s];
            }
        }
        for (int i = 0; i < n; ++i) {
            double gm = gamma_cache_[static_cast<std::size_t>(i) * channels + c];
            const double* g = dy.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
            const double* xh = xhat_.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
            double* d = dx.data() + (static_cast<std::size_t>(i) * channels + c) * spatial;
            for (int s = 0; s < spatial; ++s) {
                double dxh = g[s] * gm;
                d[s] = invstd_[c] / m * (m * dxh - sum_dxhat - xh[s] * sum_dxhat_xhat);
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(ParamStore& ps, const std::string& name, int in_dim_, int out_dim_,
               std::mt19937_64& rng)
    : in_dim(in_dim_), out_dim(out_dim_) {
    w_ = &ps.create(name + "/weight", {out_dim, in_dim});
    b_ = &ps.create(name + "/bias", {out_dim});
    init_uniform(w_->value, uniform_fan_in_bound(in_dim), rng);
    init_uniform(b_->value, uniform_fan_in_bound(in_dim), rng);
}

Tensor Linear::forward(const Tensor& x) {
    int n = x.dim(0);
    x_cache_ = x;
    Tensor y({n, out_dim});
    // y = x * W^T
    dgemm(false, true, n, out_dim, in_dim, 1.0, x.data(), in_dim, w_->value.data(), in_dim, 0.0,
          y.data(), out_dim);
    for (int i = 0; i < n; ++i) {
        for (int o = 0; o < out_dim; ++o) y[static_cast<std::size_t>(i) * out_dim + o] += b_->value[o];
    }
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    int n = dy.dim(0);
    // dW += dy^T * x ; dx = dy * W ; db += colsum(dy)
    dgemm(true, false, out_dim, in_dim, n, 1.0, dy.data(), out_dim, x_cache_.data(), in_dim, 1.0,
          w_->grad.data(), in_dim);
    Tensor dx({n, in_dim});
    dgemm(false, false, n, in_dim, out_dim, 1.0, dy.data(), out_dim, w_->value.data(), in_dim,
          0.0, dx.data(), in_dim);
    for (int i = 0; i < n; ++i) {
        for (int o = 0; o < out_dim; ++o) b_->grad[o] += dy[static_cast<std::size_t>(i) * out_dim + o];
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Pointwise ops

Tensor ReLU::forward(const Tensor& x) {
    mask_.assign(x.numel(), 0);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        if (x[i] > 0.0) {
            y[i] = x[i];
            mask_[i] = 1;
        }
    }
    return y;
}

Tensor ReLU::backward(const Tensor& dy) {
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = mask_[i] ? dy[i] : 0.0;
    return dx;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
    Tensor dx(y.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
    return dx;
}

Tensor upsample2x_3d(const Tensor& x) {
    int n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
    Tensor y({n, c, d * 2, h * 2, w * 2});
    for (int i = 0; i < n; ++i) {
        for (int ci = 0; ci < c; ++ci) {
            const double* src = x.data() + ((static_cast<std::size_t>(i) * c + ci) * d) * h * w;
            double* dst = y.data() + ((static_cast<std::size_t>(i) * c + ci) * d * 2) * h * 2 * w * 2;
            for (int z = 0; z < d * 2; ++z) {
                for (int yy = 0; yy < h * 2; ++yy) {
                    const double* row = src + (static_cast<std::size_t>(z / 2) * h + yy / 2) * w;
                    double* out = dst + (static_cast<std::size_t>(z) * h * 2 + yy) * w * 2;
                    for (int xx = 0; xx < w * 2; ++xx) out[xx] = row[xx / 2];
                }
            }
        }
    }
    return y;
}

Tensor upsample2x_3d_backward(const Tensor& dy, const std::vector<int>& in_shape) {
    int n = in_shape[0], c = in_shape[1], d = in_shape[2], h = in_shape[3], w = in_shape[4];
    Tensor dx(in_shape);
    for (int i = 0; i < n; ++i) {
        for (int ci = 0; ci < c; ++ci) {
            double* dst = dx.data() + ((static_cast<std::size_t>(i) * c + ci) * d) * h * w;
            const double* src =
                dy.data() + ((static_cast<std::size_t>(i) * c + ci) * d * 2) * h * 2 * w * 2;
            for (int z = 0; z < d * 2; ++z) {
                for (int yy = 0; yy < h * 2; ++yy) {
                    double* row = dst + (static_cast<std::size_t>(z / 2) * h + yy / 2) * w;
                    const double* in = src + (static_cast<std::size_t>(z) * h * 2 + yy) * w * 2;
                    for (int xx = 0; xx < w * 2; ++xx) row[xx / 2] += in[xx];
                }
            }
        }
    }
    return dx;
}

Tensor global_avg_pool2d(const Tensor& x) {
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({n, c});
    double inv = 1.0 / (static_cast<double>(h) * w);
    for (int i = 0; i < n; ++i) {
        for (int ci = 0; ci < c; ++ci) {
            const double* src = x.data() + (static_cast<std::size_t>(i) * c + ci) * h * w;
            double s = 0.0;
            for (int j = 0; j < h * w; ++j) s += src[j];
            y[static_cast<std::size_t>(i) * c + ci] = s * inv;
        }
    }
    return y;
}

Tensor global_avg_pool2d_backward(const Tensor& dy, const std::vector<int>& in_shape) {
    int n = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3];
    Tensor dx(in_shape);
    double inv = 1.0 / (static_cast<double>(h) * w);
    for (int i = 0; i < n; ++i) {
        for (int ci = 0; ci < c; ++ci) {
            double g = dy[static_cast<std::size_t>(i) * c + ci] * inv;
            double* dst = dx.data() + (static_cast<std::size_t>(i) * c + ci) * h * w;
            for (int j = 0; j < h * w; ++j) dst[j] = g;
        }
    }
    return dx;
}

double bce(const Tensor& probs, const Tensor& targets, Tensor* dprobs, double eps) {
    if (probs.numel() != targets.numel()) {
        throw DataError("bce: probs/targets size mismatch");
    }
    std::size_t n = probs.numel();
    double loss = 0.0;
    if (dprobs) *dprobs = Tensor(probs.shape());
    for (std::size_t i = 0; i < n; ++i) {
        double p = std::min(std::max(probs[i], eps), 1.0 - eps);
        double y = targets[i];
        loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        if (dprobs) {
            bool clamped = probs[i] < eps || probs[i] > 1.0 - eps;
            (*dprobs)[i] = clamped ? 0.0 : (p - y) / (p * (1.0 - p)) / static_cast<double>(n);
        }
    }
    return loss / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Encoder2D

namespace {
int scaled_channels(int base, double ws) { return std::max(2, static_cast<int>(std::lround(base * ws))); }
}  // namespace

Encoder2D::Encoder2D(ParamStore& ps, const EncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    int c = scaled_channels(64, cfg.width_scale);
    stem_ = std::make_unique<Conv2d>(ps, "encoder/stem/conv", 3, c, 3, 1, 1, rng);
    stem_bn_ = std::make_unique<BatchNorm>(ps, "encoder/stem/bn", c);
    bn_layers_.push_back({"encoder/stem/bn", c});
    int in_c = c;
    for (int s = 0; s < 4; ++s) {
        int out_c = scaled_channels(64 << s, cfg.width_scale);
        std::string base = "encoder/stage" + std::to_string(s);
        Stage st;
        st.conv1 = std::make_unique<Conv2d>(ps, base + "/conv1", in_c, out_c, 3, 2, 1, rng);
        st.bn1 = std::make_unique<BatchNorm>(ps, base + "/bn1", out_c);
        st.conv2 = std::make_unique<Conv2d>(ps, base + "/conv2", out_c, out_c, 3, 1, 1, rng);
        st.bn2 = std::make_unique<BatchNorm>(ps, base + "/bn2", out_c);
        st.proj = std::make_unique<Conv2d>(ps, base + "/proj", in_c, out_c, 1, 2, 0, rng);
        bn_layers_.push_back({base + "/bn1", out_c});
        bn_layers_.push_back({base + "/bn2", out_c});
        stages_.push_back(std::move(st));
        in_c = out_c;
    }
    fc_ = std::make_unique<Linear>(ps, "encoder/fc", in_c, cfg.embedding_dim, rng);
}

Tensor Encoder2D::bn_apply(BatchNorm& bn, const Tensor& x, AffineProvider& affine,
                           const std::vector<int>& cls, bool training) {
    int n = x.dim(0);
    Tensor gamma({n, bn.channels}), beta({n, bn.channels});
    affine.gamma_beta(bn.layer_id, cls, gamma, beta);
    return bn.forward(x, gamma, beta, training);
}

Tensor Encoder2D::bn_unapply(BatchNorm& bn, const Tensor& dy, AffineProvider& affine) {
    Tensor dgamma, dbeta;
    Tensor dx = bn.backward(dy, dgamma, dbeta);
    affine.backward(bn.layer_id, cls_cache_, dgamma, dbeta);
    return dx;
}

Tensor Encoder2D::forward(const Tensor& images, AffineProvider& affine,
                          const std::vector<int>& cls, bool training) {
    cls_cache_ = cls;
    Tensor x = stem_->forward(images);
    x = bn_apply(*stem_bn_, x, affine, cls, training);
    x = stem_relu_.forward(x);
    for (auto& st : stages_) {
        st.skip_cache = x;
        Tensor skip = st.proj->forward(x);
        Tensor h = st.conv1->forward(x);
        h = bn_apply(*st.bn1, h, affine, cls, training);
        h = st.relu1.forward(h);
        h = st.conv2->forward(h);
        h = bn_apply(*st.bn2, h, affine, cls, training);
        for (std::size_t i = 0; i < h.numel(); ++i) h[i] += skip[i];
        x = st.relu2.forward(h);
    }
    pool_in_shape_ = x.shape();
    Tensor pooled = global_avg_pool2d(x);
    return fc_->forward(pooled);
}

Tensor Encoder2D::backward(const Tensor& dembed, AffineProvider& affine) {
    Tensor d = fc_->backward(dembed);
    d = global_avg_pool2d_backward(d, pool_in_shape_);
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
        auto& st = *it;
        Tensor dh = st.relu2.backward(d);
        Tensor dskip = dh;  // residual add fans out
        dh = bn_unapply(*st.bn2, dh, affine);
        dh = st.conv2->backward(dh);
        dh = st.relu1.backward(dh);
        dh = bn_unapply(*st.bn1, dh, affine);
        dh = st.conv1->backward(dh);
        Tensor dproj = st.proj->backward(dskip);
        for (std::size_t i = 0; i < dh.numel(); ++i) dh[i] += dproj[i];
        d = std::move(dh);
    }
    d = stem_relu_.backward(d);
    d = bn_unapply(*stem_bn_, d, affine);
    return stem_->backward(d);
}

// ---------------------------------------------------------------------------
// Decoder3D

Decoder3D::Decoder3D(ParamStore& ps, const DecoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    int r = cfg.output_resolution;
    if (r != 8 && r != 16 && r != 32) {
        throw ConfigError("Decoder3D: output_resolution must be 8, 16 or 32");
    }
    if (cfg.num_layers != 7) {
        throw ConfigError("Decoder3D: layer count is fixed at 7");
    }
    int n_up = 0;
    for (int v = 4; v < r; v *= 2) ++n_up;

    int c0 = scaled_channels(64, cfg.width_scale);
    seed_shape_ = {0, c0, 4, 4, 4};
    fc_ = std::make_unique<Linear>(ps, "decoder/fc", cfg.input_dim, c0 * 64, rng);

    // Upsamples are interleaved before the last 2*n_up convs at every other
    // position, so the final conv always runs at full resolution.
    upsample_before_.assign(7, false);
    for (int u = 0; u < n_up; ++u) {
        upsample_before_[static_cast<std::size_t>(7 - 2 * n_up + 2 * u)] = true;
    }

    int channels[7];
    for (int j = 0; j < 6; ++j) {
        channels[j] = scaled_channels(64 >> (j / 2), cfg.width_scale);
    }
    channels[6] = 1;

    int in_c = c0;
    for (int j = 0; j < 7; ++j) {
        std::string base = "decoder/conv" + std::to_string(j + 1);
        convs_.push_back(std::make_unique<Conv3d>(ps, base, in_c, channels[j], 3, 1, 1, rng));
        if (j < 6) {
            bns_.push_back(std::make_unique<BatchNorm>(ps, "decoder/bn" + std::to_string(j + 1),
                                                       channels[j]));
            bn_layers_.push_back({"decoder/bn" + std::to_string(j + 1), channels[j]});
        }
        in_c = channels[j];
    }
    relus_.resize(6);
    up_in_shapes_.resize(7);
}

Tensor Decoder3D::forward(const Tensor& z, AffineProvider& affine, const std::vector<int>& cls,
                          bool training) {
    if (z.dim(1) != cfg_.input_dim) {
        throw DataError("Decoder3D: input dim " + std::to_string(z.dim(1)) + ", expected " +
                        std::to_string(cfg_.input_dim));
    }
    cls_cache_ = cls;
    int n = z.dim(0);
    Tensor x = fc_->forward(z);
    x = Tensor({n, seed_shape_[1], 4, 4, 4}, std::move(x.vec()));
    for (int j = 0; j < 7; ++j) {
        if (upsample_before_[static_cast<std::size_t>(j)]) {
            up_in_shapes_[static_cast<std::size_t>(j)] = x.shape();
            x = upsample2x_3d(x);
        }
        x = convs_[static_cast<std::size_t>(j)]->forward(x);
        if (j < 6) {
            auto& bn = *bns_[static_cast<std::size_t>(j)];
            Tensor gamma({n, bn.channels}), beta({n, bn.channels});
            affine.gamma_beta(bn.layer_id, cls, gamma, beta);
            x = bn.forward(x, gamma, beta, training);
            x = relus_[static_cast<std::size_t>(j)].forward(x);
        }
    }
    probs_cache_ = sigmoid(x);
    int r = cfg_.output_resolution;
    return Tensor({n, r * r * r}, std::vector<double>(probs_cache_.vec()));
}

Tensor Decoder3D::backward(const Tensor& dprobs, AffineProvider& affine) {
    Tensor d = sigmoid_backward(probs_cache_, Tensor(probs_cache_.shape(), std::vector<double>(dprobs.vec())));
    for (int j = 6; j >= 0; --j) {
        if (j < 6) {
            d = relus_[static_cast<std::size_t>(j)].backward(d);
            Tensor dgamma, dbeta;
            d = bns_[static_cast<std::size_t>(j)]->backward(d, dgamma, dbeta);
            affine.backward(bns_[static_cast<std::size_t>(j)]->layer_id, cls_cache_, dgamma, dbeta);
        }
        d = convs_[static_cast<std::size_t>(j)]->backward(d);
        if (upsample_before_[static_cast<std::size_t>(j)]) {
            d = upsample2x_3d_backward(d, up_in_shapes_[static_cast<std::size_t>(j)]);
        }
    }
    int n = d.dim(0);
    d = Tensor({n, seed_shape_[1] * 64}, std::move(d.vec()));
    return fc_->backward(d);
}

// ---------------------------------------------------------------------------
// ShapeEncoder3D

ShapeEncoder3D::ShapeEncoder3D(ParamStore& ps, int resolution, int out_dim, double width_scale,
                               std::mt19937_64& rng) {
    int c1 = scaled_channels(16, width_scale);
    int c2 = scaled_channels(32, width_scale);
    conv1_ = std::make_unique<Conv3d>(ps, "shape_encoder/conv1", 1, c1, 3, 2, 1, rng);
    conv2_ = std::make_unique<Conv3d>(ps, "shape_encoder/conv2", c1, c2, 3, 2, 1, rng);
    int r4 = (resolution + 3) / 4;
    spatial_out_ = c2 * r4 * r4 * r4;
    fc_ = std::make_unique<Linear>(ps, "shape_encoder/fc", spatial_out_, out_dim, rng);
}

Tensor ShapeEncoder3D::forward(const Tensor& fields) {
    Tensor x = conv1_->forward(fields);
    x = relu1_.forward(x);
    x = conv2_->forward(x);
    x = relu2_.forward(x);
    pool_in_shape_ = x.shape();
    int n = x.dim(0);
    x = Tensor({n, spatial_out_}, std::move(x.vec()));
    return fc_->forward(x);
}

Tensor ShapeEncoder3D::backward(const Tensor& dembed) {
    Tensor d = fc_->backward(dembed);
    d = Tensor(pool_in_shape_, std::move(d.vec()));
    d = relu2_.backward(d);
    d = conv2_->backward(d);
    d = relu1_.backward(d);
    return conv1_->backward(d);
}

}  // namespace fewrec::nn
