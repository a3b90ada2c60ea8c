#include "busi/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "busi/errors.hpp"

namespace busi::nn {

namespace {

void check_nhwc(const Tensor& x, int channels, const std::string& who) {
    if (x.ndim() != 4 || x.dim(3) != channels) {
        throw ShapeError(who + ": expected (n, h, w, " + std::to_string(channels) +
                         "), got " + x.shape_string());
    }
}

int conv_output_size(int in, int pad_begin, int pad_end, int kernel, int stride) {
    return (in + pad_begin + pad_end - kernel) / stride + 1;
}

// One sample, NHWC: gather (oh*ow, k*k*c) patch matrix; out-of-range
// cells are zero.
void im2col(const double* x, int h, int w, int c, int kernel, int stride,
            int pad_top, int pad_left, int oh, int ow, double* col) {
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            double* row = col + (static_cast<std::int64_t>(oy) * ow + ox) * kernel * kernel * c;
            for (int ky = 0; ky < kernel; ++ky) {
                int iy = oy * stride - pad_top + ky;
                for (int kx = 0; kx < kernel; ++kx) {
                    int ix = ox * stride - pad_left + kx;
                    double* dst = row + (static_cast<std::int64_t>(ky) * kernel + kx) * c;
                    if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
                        const double* src = x + (static_cast<std::int64_t>(iy) * w + ix) * c;
                        std::copy(src, src + c, dst);
                    } else {
                        std::fill(dst, dst + c, 0.0);
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch-matrix gradient back onto the input gradient.
void col2im_add(const double* col, int h, int w, int c, int kernel, int stride,
                int pad_top, int pad_left, int oh, int ow, double* dx) {
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const double* row =
                col + (static_cast<std::int64_t>(oy) * ow + ox) * kernel * kernel * c;
            for (int ky = 0; ky < kernel; ++ky) {
                int iy = oy * stride - pad_top + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kernel; ++kx) {
                    int ix = ox * stride - pad_left + kx;
                    if (ix < 0 || ix >= w) continue;
                    const double* src = row + (static_cast<std::int64_t>(ky) * kernel + kx) * c;
                    double* dst = dx + (static_cast<std::int64_t>(iy) * w + ix) * c;
                    for (int i = 0; i < c; ++i) dst[i] += src[i];
                }
            }
        }
    }
}

}  // namespace

std::array<int, 4> PadSpec::resolve(int in_h, int in_w, int kernel, int stride) const {
    switch (mode) {
        case Mode::valid:
            return {0, 0, 0, 0};
        case Mode::fixed:
            return {top, bottom, left, right};
        case Mode::same: {
            auto split = [&](int in) -> std::pair<int, int> {
                int out = (in + stride - 1) / stride;
                int total = std::max((out - 1) * stride + kernel - in, 0);
                return {total / 2, total - total / 2};
            };
            auto [pt, pb] = split(in_h);
            auto [pl, pr] = split(in_w);
            return {pt, pb, pl, pr};
        }
    }
    return {0, 0, 0, 0};
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel,
               int stride, PadSpec pad, bool use_bias, Init kernel_init)
    : name_(std::move(name)),
      in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      use_bias_(use_bias) {
    kernel_param_.name = name_ + "/kernel";
    kernel_param_.value = Tensor({kernel, kernel, in_channels, out_channels});
    kernel_param_.grad = Tensor({kernel, kernel, in_channels, out_channels});
    kernel_param_.init = kernel_init;
    kernel_param_.fan_in = kernel * kernel * in_channels;
    kernel_param_.fan_out = kernel * kernel * out_channels;
    if (use_bias_) {
        bias_param_.name = name_ + "/bias";
        bias_param_.value = Tensor({out_channels});
        bias_param_.grad = Tensor({out_channels});
        bias_param_.init = Init::zeros;
    }
}

Tensor Conv2d::forward(const Tensor& x, bool training) {
    check_nhwc(x, in_channels_, name_);
    int n = x.dim(0), h = x.dim(1), w = x.dim(2);
    auto [pt, pb, pl, pr] = pad_.resolve(h, w, kernel_, stride_);
    int oh = conv_output_size(h, pt, pb, kernel_, stride_);
    int ow = conv_output_size(w, pl, pr, kernel_, stride_);
    if (oh < 1 || ow < 1) {
        throw ShapeError(name_ + ": input " + x.shape_string() + " too small for kernel");
    }

    if (training) cached_input_ = x;

    Tensor out({n, oh, ow, out_channels_});
    std::int64_t in_stride = static_cast<std::int64_t>(h) * w * in_channels_;
    std::int64_t out_stride = static_cast<std::int64_t>(oh) * ow * out_channels_;
    std::vector<double> col(static_cast<std::size_t>(oh) * ow * kernel_ * kernel_ *
                            in_channels_);
    for (int s = 0; s < n; ++s) {
        im2col(x.data() + s * in_stride, h, w, in_channels_, kernel_, stride_, pt, pl,
               oh, ow, col.data());
        matmul(col.data(), kernel_param_.value.data(), out.data() + s * out_stride,
               oh * ow, kernel_ * kernel_ * in_channels_, out_channels_);
    }
    if (use_bias_) {
        double* o = out.data();
        for (std::int64_t i = 0; i < out.size(); i += out_channels_) {
            for (int c = 0; c < out_channels_; ++c) o[i + c] += bias_param_.value[c];
        }
    }
    return out;
}

Tensor Conv2d::backward(const Tensor& grad_output) {
    const Tensor& x = cached_input_;
    if (x.empty()) throw Error(name_ + ": backward before forward(training=true)");
    int n = x.dim(0), h = x.dim(1), w = x.dim(2);
    auto [pt, pb, pl, pr] = pad_.resolve(h, w, kernel_, stride_);
    int oh = grad_output.dim(1), ow = grad_output.dim(2);

    Tensor dx({n, h, w, in_channels_});
    int patch = kernel_ * kernel_ * in_channels_;
    std::vector<double> col(static_cast<std::size_t>(oh) * ow * patch);
    std::vector<double> dcol(col.size());
    std::int64_t in_stride = static_cast<std::int64_t>(h) * w * in_channels_;
    std::int64_t out_stride = static_cast<std::int64_t>(oh) * ow * out_channels_;

    for (int s = 0; s < n; ++s) {
        const double* dy = grad_output.data() + s * out_stride;
        im2col(x.data() + s * in_stride, h, w, in_channels_, kernel_, stride_, pt, pl,
               oh, ow, col.data());
        // dW += col^T * dY
        matmul(col.data(), dy, kernel_param_.grad.data(), patch, oh * ow, out_channels_,
               true, false, 1.0, 1.0);
        // dcol = dY * W^T
        matmul(dy, kernel_param_.value.data(), dcol.data(), oh * ow, out_channels_,
               patch, false, true);
        col2im_add(dcol.data(), h, w, in_channels_, kernel_, stride_, pt, pl, oh, ow,
                   dx.data() + s * in_stride);
        if (use_bias_) {
            for (std::int64_t i = 0; i < out_stride; i += out_channels_) {
                for (int c = 0; c < out_channels_; ++c) bias_param_.grad[c] += dy[i + c];
            }
        }
    }
    return dx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&kernel_param_);
    if (use_bias_) out.push_back(&bias_param_);
}

// ------------------------------------------------------- DepthwiseConv2d

DepthwiseConv2d::DepthwiseConv2d(std::string name, int channels, int kernel,
                                 int stride, PadSpec pad)
    : name_(std::move(name)),
      channels_(channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {
    kernel_param_.name = name_ + "/kernel";
    kernel_param_.value = Tensor({kernel, kernel, channels});
    kernel_param_.grad = Tensor({kernel, kernel, channels});
    kernel_param_.init = Init::he_normal;
    kernel_param_.fan_in = kernel * kernel;
    kernel_param_.fan_out = kernel * kernel;
}

Tensor DepthwiseConv2d::forward(const Tensor& x, bool training) {
    check_nhwc(x, channels_, name_);
    int n = x.dim(0), h = x.dim(1), w = x.dim(2);
    auto [pt, pb, pl, pr] = pad_.resolve(h, w, kernel_, stride_);
    int oh = conv_output_size(h, pt, pb, kernel_, stride_);
    int ow = conv_output_size(w, pl, pr, kernel_, stride_);
    if (training) cached_input_ = x;

    Tensor out({n, oh, ow, channels_});
    const double* kw = kernel_param_.value.data();
    for (int s = 0; s < n; ++s) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double* o = out.data() +
                            ((static_cast<std::int64_t>(s) * oh + oy) * ow + ox) * channels_;
                for (int ky = 0; ky < kernel_; ++ky) {
                    int iy = oy * stride_ - pt + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kernel_; ++kx) {
                        int ix = ox * stride_ - pl + kx;
                        if (ix < 0 || ix >= w) continue;
                        const double* in = x.data() +
                            ((static_cast<std::int64_t>(s) * h + iy) * w + ix) * channels_;
                        const double* kk = kw + (static_cast<std::int64_t>(ky) * kernel_ + kx) * channels_;
                        for (int c = 0; c < channels_; ++c) o[c] += in[c] * kk[c];
                    }
                }
            }
        }
    }
    return out;
}

Tensor DepthwiseConv2d::backward(const Tensor& grad_output) {
    const Tensor& x = cached_input_;
    if (x.empty()) throw Error(name_ + ": backward before forward(training=true)");
    int n = x.dim(0), h = x.dim(1), w = x.dim(2);
    auto [pt, pb, pl, pr] = pad_.resolve(h, w, kernel_, stride_);
    int oh = grad_output.dim(1), ow = grad_output.dim(2);

    Tensor dx({n, h, w, channels_});
    const double* kw = kernel_param_.value.data();
    double* dkw = kernel_param_.grad.data();
    for (int s = 0; s < n; ++s) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double* dy = grad_output.data() +
                    ((static_cast<std::int64_t>(s) * oh + oy) * ow + ox) * channels_;
                for (int ky = 0; ky < kernel_; ++ky) {
                    int iy = oy * stride_ - pt + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kernel_; ++kx) {
                        int ix = ox * stride_ - pl + kx;
                        if (ix < 0 || ix >= w) continue;
                        std::int64_t in_off =
                            ((static_cast<std::int64_t>(s) * h + iy) * w + ix) * channels_;
                        std::int64_t k_off =
                            (static_cast<std::int64_t>(ky) * kernel_ + kx) * channels_;
                        for (int c = 0; c < channels_; ++c) {
                            dkw[k_off + c] += dy[c] * x[in_off + c];
                            dx[in_off + c] += dy[c] * kw[k_off + c];
                        }
                    }
                }
            }
        }
    }
    return dx;
}

void DepthwiseConv2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&kernel_param_);
}

// -------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::string name, int channels, double epsilon)
    : name_(std::move(name)), channels_(channels), epsilon_(epsilon) {
    gamma_ = Param{name_ + "/gamma", Tensor({channels}), Tensor({channels}), true,
                   Init::ones, channels, channels};
    beta_ = Param{name_ + "/beta", Tensor({channels}), Tensor({channels}), true,
                  Init::zeros, channels, channels};
    running_mean_ = Param{name_ + "/moving_mean", Tensor({channels}), Tensor(), false,
                          Init::zeros, channels, channels};
    running_var_ = Param{name_ + "/moving_variance", Tensor({channels}), Tensor(), false,
                         Init::ones, channels, channels};
    // fresh stats are the identity transform
    std::fill(running_var_.value.storage().begin(), running_var_.value.storage().end(), 1.0);
    std::fill(gamma_.value.storage().begin(), gamma_.value.storage().end(), 1.0);
}

Tensor BatchNorm::forward(const Tensor& x, bool training) {
    check_nhwc(x, channels_, name_);
    if (training) cached_input_ = x;
    Tensor out(x.shape());
    std::vector<double> scale(static_cast<std::size_t>(channels_));
    std::vector<double> shift(static_cast<std::size_t>(channels_));
    for (int c = 0; c < channels_; ++c) {
        double inv = 1.0 / std::sqrt(running_var_.value[c] + epsilon_);
        scale[static_cast<std::size_t>(c)] = gamma_.value[c] * inv;
        shift[static_cast<std::size_t>(c)] =
            beta_.value[c] - running_mean_.value[c] * gamma_.value[c] * inv;
    }
    const double* in = x.data();
    double* o = out.data();
    for (std::int64_t i = 0; i < x.size(); i += channels_) {
        for (int c = 0; c < channels_; ++c) {
            o[i + c] = in[i + c] * scale[static_cast<std::size_t>(c)] +
                       shift[static_cast<std::size_t>(c)];
        }
    }
    return out;
}

Tensor BatchNorm::backward(const Tensor& grad_output) {
    const Tensor& x = cached_input_;
    if (x.empty()) throw Error(name_ + ": backward before forward(training=true)");
    Tensor dx(x.shape());
    for (int c = 0; c < channels_; ++c) {
        double inv = 1.0 / std::sqrt(running_var_.value[c] + epsilon_);
        double mean = running_mean_.value[c];
        double gamma_inv = gamma_.value[c] * inv;
        double dgamma = 0.0;
        double dbeta = 0.0;
        const double* in = x.data();
        const double* dy = grad_output.data();
        double* dxp = dx.data();
        for (std::int64_t i = c; i < x.size(); i += channels_) {
            dgamma += dy[i] * (in[i] - mean) * inv;
            dbeta += dy[i];
            dxp[i] = dy[i] * gamma_inv;
        }
        gamma_.grad[c] += dgamma;
        beta_.grad[c] += dbeta;
    }
    return dx;
}

void BatchNorm::collect_params(std::vector<Param*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

void BatchNorm::collect_buffers(std::vector<Param*>& out) {
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
}

// ------------------------------------------------------------------ Relu

Relu::Relu(std::string name, double max_value)
    : name_(std::move(name)), max_value_(max_value) {}

Tensor Relu::forward(const Tensor& x, bool training) {
    Tensor out(x.shape());
    if (training) cached_mask_.assign(static_cast<std::size_t>(x.size()), 0);
    const double* in = x.data();
    double* o = out.data();
    for (std::int64_t i = 0; i < x.size(); ++i) {
        double v = in[i] > 0.0 ? in[i] : 0.0;
        bool open = in[i] > 0.0;
        if (max_value_ >= 0.0 && v > max_value_) {
            v = max_value_;
            open = false;
        }
        o[i] = v;
        if (training && open) cached_mask_[static_cast<std::size_t>(i)] = 1;
    }
    return out;
}

Tensor Relu::backward(const Tensor& grad_output) {
    if (cached_mask_.size() != static_cast<std::size_t>(grad_output.size())) {
        throw Error(name_ + ": backward before forward(training=true)");
    }
    Tensor dx(grad_output.shape());
    const double* dy = grad_output.data();
    double* o = dx.data();
    for (std::int64_t i = 0; i < grad_output.size(); ++i) {
        o[i] = cached_mask_[static_cast<std::size_t>(i)] ? dy[i] : 0.0;
    }
    return dx;
}

// ------------------------------------------------------------- MaxPool2d

MaxPool2d::MaxPool2d(std::string name, int kernel, int stride, PadSpec pad)
    : name_(std::move(name)), kernel_(kernel), stride_(stride), pad_(pad) {}

Tensor MaxPool2d::forward(const Tensor& x, bool training) {
    if (x.ndim() != 4) throw ShapeError(name_ + ": expected NHWC input");
    int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    auto [pt, pb, pl, pr] = pad_.resolve(h, w, kernel_, stride_);
    int oh = conv_output_size(h, pt, pb, kernel_, stride_);
    int ow = conv_output_size(w, pl, pr, kernel_, stride_);

    input_shape_ = x.shape();
    Tensor out({n, oh, ow, c});
    if (training) {
        cached_argmax_.assign(static_cast<std::size_t>(out.size()), -1);
    } else {
        cached_argmax_.clear();
    }

    for (int s = 0; s < n; ++s) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                for (int ch = 0; ch < c; ++ch) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::int64_t best_index = -1;
                    for (int ky = 0; ky < kernel_; ++ky) {
                        int iy = oy * stride_ - pt + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kernel_; ++kx) {
                            int ix = ox * stride_ - pl + kx;
                            if (ix < 0 || ix >= w) continue;
                            std::int64_t idx =
                                ((static_cast<std::int64_t>(s) * h + iy) * w + ix) * c + ch;
                            if (x[idx] > best) {
                                best = x[idx];
                                best_index = idx;
                            }
                        }
                    }
                    std::int64_t out_idx =
                        ((static_cast<std::int64_t>(s) * oh + oy) * ow + ox) * c + ch;
                    out[out_idx] = best;
                    if (training) cached_argmax_[static_cast<std::size_t>(out_idx)] = best_index;
                }
            }
        }
    }
    return out;
}

Tensor MaxPool2d::backward(const Tensor& grad_output) {
    if (cached_argmax_.size() != static_cast<std::size_t>(grad_output.size())) {
        throw Error(name_ + ": backward before forward(training=true)");
    }
    Tensor dx(input_shape_);
    const double* dy = grad_output.data();
    for (std::int64_t i = 0; i < grad_output.size(); ++i) {
        dx[cached_argmax_[static_cast<std::size_t>(i)]] += dy[i];
    }
    return dx;
}

// --------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, bool training) {
    if (x.ndim() != 4) throw ShapeError(name_ + ": expected NHWC input");
    (void)training;
    int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    input_shape_ = x.shape();
    Tensor out({n, c});
    double inv = 1.0 / (static_cast<double>(h) * w);
    for (int s = 0; s < n; ++s) {
        const double* in = x.data() + static_cast<std::int64_t>(s) * h * w * c;
        double* o = out.data() + static_cast<std::int64_t>(s) * c;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w * c; ++i) {
            o[i % c] += in[i];
        }
        for (int ch = 0; ch < c; ++ch) o[ch] *= inv;
    }
    return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_output) {
    if (input_shape_.empty()) throw Error(name_ + ": backward before forward");
    int n = input_shape_[0], h = input_shape_[1], w = input_shape_[2], c = input_shape_[3];
    Tensor dx(input_shape_);
    double inv = 1.0 / (static_cast<double>(h) * w);
    for (int s = 0; s < n; ++s) {
        const double* dy = grad_output.data() + static_cast<std::int64_t>(s) * c;
        double* o = dx.data() + static_cast<std::int64_t>(s) * h * w * c;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w * c; ++i) {
            o[i] = dy[i % c] * inv;
        }
    }
    return dx;
}

// ----------------------------------------------------------------- Dense

Dense::Dense(std::string name, int in_features, int out_features, Init kernel_init)
    : name_(std::move(name)), in_features_(in_features), out_features_(out_features) {
    kernel_param_ = Param{name_ + "/kernel", Tensor({in_features, out_features}),
                          Tensor({in_features, out_features}), true, kernel_init,
                          in_features, out_features};
    bias_param_ = Param{name_ + "/bias", Tensor({out_features}), Tensor({out_features}),
                        true, Init::zeros, in_features, out_features};
}

Tensor Dense::forward(const Tensor& x, bool training) {
    if (x.ndim() != 2 || x.dim(1) != in_features_) {
        throw ShapeError(name_ + ": expected (n, " + std::to_string(in_features_) +
                         "), got " + x.shape_string());
    }
    if (training) cached_input_ = x;
    int n = x.dim(0);
    Tensor out({n, out_features_});
    matmul(x.data(), kernel_param_.value.data(), out.data(), n, in_features_,
           out_features_);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < out_features_; ++j) out.at(i, j) += bias_param_.value[j];
    }
    return out;
}

Tensor Dense::backward(const Tensor& grad_output) {
    const Tensor& x = cached_input_;
    if (x.empty()) throw Error(name_ + ": backward before forward(training=true)");
    int n = x.dim(0);
    // dW += x^T dY ; db += column sums ; dx = dY W^T
    matmul(x.data(), grad_output.data(), kernel_param_.grad.data(), in_features_, n,
           out_features_, true, false, 1.0, 1.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < out_features_; ++j) {
            bias_param_.grad[j] += grad_output.at(i, j);
        }
    }
    Tensor dx({n, in_features_});
    matmul(grad_output.data(), kernel_param_.value.data(), dx.data(), n, out_features_,
           in_features_, false, true);
    return dx;
}

void Dense::collect_params(std::vector<Param*>& out) {
    out.push_back(&kernel_param_);
    out.push_back(&bias_param_);
}

// ------------------------------------------------------------ Sequential

Tensor Sequential::forward(const Tensor& x, bool training) {
    Tensor cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur, training);
    return cur;
}

Tensor Sequential::backward(const Tensor& grad_output) {
    Tensor cur = grad_output;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        cur = (*it)->backward(cur);
    }
    return cur;
}

Tensor Sequential::forward_traced(
    const Tensor& x, std::vector<std::pair<std::string, std::vector<int>>>& trace) {
    Tensor cur = x;
    for (auto& layer : layers_) {
        cur = layer->forward(cur, false);
        trace.emplace_back(layer->name(), cur.shape());
    }
    return cur;
}

void Sequential::collect_params(std::vector<Param*>& out) {
    for (auto& layer : layers_) layer->collect_params(out);
}

void Sequential::collect_buffers(std::vector<Param*>& out) {
    for (auto& layer : layers_) layer->collect_buffers(out);
}

// ------------------------------------------------------- BottleneckBlock

BottleneckBlock::BottleneckBlock(std::string name, int in_channels, int mid_channels,
                                 int out_channels, int stride, bool projection)
    : name_(std::move(name)), main_(name_ + "/main"), shortcut_(name_ + "/shortcut") {
    main_.emplace<Conv2d>(name_ + "/conv1", in_channels, mid_channels, 1, 1,
                          PadSpec::valid(), false);
    main_.emplace<BatchNorm>(name_ + "/bn1", mid_channels);
    main_.emplace<Relu>(name_ + "/relu1");
    main_.emplace<Conv2d>(name_ + "/conv2", mid_channels, mid_channels, 3, stride,
                          PadSpec::same(), false);
    main_.emplace<BatchNorm>(name_ + "/bn2", mid_channels);
    main_.emplace<Relu>(name_ + "/relu2");
    main_.emplace<Conv2d>(name_ + "/conv3", mid_channels, out_channels, 1, 1,
                          PadSpec::valid(), false);
    main_.emplace<BatchNorm>(name_ + "/bn3", out_channels);
    if (projection) {
        shortcut_.emplace<Conv2d>(name_ + "/conv_proj", in_channels, out_channels, 1,
                                  stride, PadSpec::valid(), false);
        shortcut_.emplace<BatchNorm>(name_ + "/bn_proj", out_channels);
    }
}

Tensor BottleneckBlock::forward(const Tensor& x, bool training) {
    Tensor f = main_.forward(x, training);
    Tensor s = shortcut_.empty() ? x : shortcut_.forward(x, training);
    if (!f.same_shape(s)) {
        throw ShapeError(name_ + ": residual shapes differ (" + f.shape_string() +
                         " vs " + s.shape_string() + ")");
    }
    Tensor out(f.shape());
    if (training) cached_mask_.assign(static_cast<std::size_t>(f.size()), 0);
    for (std::int64_t i = 0; i < f.size(); ++i) {
        double v = f[i] + s[i];
        if (v > 0.0) {
            out[i] = v;
            if (training) cached_mask_[static_cast<std::size_t>(i)] = 1;
        }
    }
    return out;
}

Tensor BottleneckBlock::backward(const Tensor& grad_output) {
    if (cached_mask_.size() != static_cast<std::size_t>(grad_output.size())) {
        throw Error(name_ + ": backward before forward(training=true)");
    }
    Tensor dsum(grad_output.shape());
    for (std::int64_t i = 0; i < grad_output.size(); ++i) {
        dsum[i] = cached_mask_[static_cast<std::size_t>(i)] ? grad_output[i] : 0.0;
    }
    Tensor dx = main_.backward(dsum);
    if (shortcut_.empty()) {
        for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += dsum[i];
    } else {
        Tensor ds = shortcut_.backward(dsum);
        for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
    }
    return dx;
}

void BottleneckBlock::collect_params(std::vector<Param*>& out) {
    main_.collect_params(out);
    shortcut_.collect_params(out);
}

void BottleneckBlock::collect_buffers(std::vector<Param*>& out) {
    main_.collect_buffers(out);
    shortcut_.collect_buffers(out);
}

// ------------------------------------------------------------- utilities

void initialize_params(std::vector<Param*>& params, std::uint64_t seed) {
    Rng rng(mix_seed(seed, "init"));
    for (Param* p : params) {
        switch (p->init) {
            case Init::zeros:
                std::fill(p->value.storage().begin(), p->value.storage().end(), 0.0);
                break;
            case Init::ones:
                std::fill(p->value.storage().begin(), p->value.storage().end(), 1.0);
                break;
            case Init::he_normal: {
                double stddev = std::sqrt(2.0 / std::max(1, p->fan_in));
                for (auto& v : p->value.storage()) v = stddev * rng.normal();
                break;
            }
            case Init::glorot_uniform: {
                double limit = std::sqrt(6.0 / std::max(1, p->fan_in + p->fan_out));
                for (auto& v : p->value.storage()) v = rng.uniform(-limit, limit);
                break;
            }
        }
        if (!p->grad.empty()) p->zero_grad();
    }
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.ndim() != 2) throw ShapeError("softmax_rows: expected (n, k)");
    int n = logits.dim(0), k = logits.dim(1);
    Tensor out({n, k});
    for (int i = 0; i < n; ++i) {
        double max_logit = logits.at(i, 0);
        for (int j = 1; j < k; ++j) max_logit = std::max(max_logit, logits.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < k; ++j) {
            double e = std::exp(logits.at(i, j) - max_logit);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < k; ++j) out.at(i, j) /= sum;
    }
    return out;
}

}  // namespace busi::nn
