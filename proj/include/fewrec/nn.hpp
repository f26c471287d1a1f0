#ifndef FEWREC_NN_HPP
#define FEWREC_NN_HPP

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fewrec/params.hpp"
#include "fewrec/tensor.hpp"

namespace fewrec::nn {

enum class Conditioning { none, cbn, cab };

struct EncoderConfig {
    int input_size = 128;
    int embedding_dim = 128;
    double width_scale = 1.0;
    Conditioning conditioning = Conditioning::none;
};

struct DecoderConfig {
    int output_resolution = 32;  // must be 8, 16 or 32 (4 * 2^n)
    int num_layers = 7;
    int input_dim = 128;  // 256 when a concatenated prior is used
    double width_scale = 1.0;
    Conditioning conditioning = Conditioning::none;
};

// Supplies per-sample batch-norm affine parameters. The plain (unconditioned)
// implementation owns gamma/beta parameters per layer; conditioned variants
// gather them per class (CBN) or compose them from codebooks (CAB).
class AffineProvider {
public:
    virtual ~AffineProvider() = default;
    // Fill gamma/beta, each shaped [N, C], for batch entries with class rows `cls`.
    virtual void gamma_beta(const std::string& layer_id, const std::vector<int>& cls,
                            Tensor& gamma, Tensor& beta) = 0;
    // Accumulate parameter gradients from dgamma/dbeta, each [N, C].
    virtual void backward(const std::string& layer_id, const std::vector<int>& cls,
                          const Tensor& dgamma, const Tensor& dbeta) = 0;
};

double uniform_fan_in_bound(int fan_in);
void init_uniform(Tensor& t, double bound, std::mt19937_64& rng);
void init_normal(Tensor& t, double mean, double stddev, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Layers. Each caches what its backward pass needs; backward returns dx and
// accumulates into parameter grads.

class Conv2d {
public:
    Conv2d(ParamStore& ps, const std::string& name, int in_c, int out_c, int k, int stride,
           int pad, std::mt19937_64& rng);
    Tensor forward(const Tensor& x);  // [N,C,H,W] -> [N,O,Ho,Wo]
    Tensor backward(const Tensor& dy);

    int in_c, out_c, k, stride, pad;

private:
    Param* w_;  // [O, C*k*k]
    Param* b_;  // [O]
    std::vector<int> in_shape_;
    std::vector<Tensor> cols_;  // per-sample im2col matrices
};

class Conv3d {
public:
    Conv3d(ParamStore& ps, const std::string& name, int in_c, int out_c, int k, int stride,
           int pad, std::mt19937_64& rng);
    Tensor forward(const Tensor& x);  // [N,C,D,H,W] -> [N,O,Do,Ho,Wo]
    Tensor backward(const Tensor& dy);

    int in_c, out_c, k, stride, pad;

private:
    Param* w_;
    Param* b_;
    std::vector<int> in_shape_;
    std::vector<Tensor> cols_;
};

// Batch normalization over [N, C, S] with per-sample affine rows. Training
// mode normalizes with batch statistics and updates running stats; eval mode
// normalizes with running stats (so frozen backbones stay frozen during
// novel-class adaptation).
class BatchNorm {
public:
    BatchNorm(ParamStore& ps, const std::string& name, int channels, double eps = 1e-5,
              double momentum = 0.1);
    // x interpreted as [N, C, S]; gamma/beta are [N, C].
    Tensor forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, bool training);
    Tensor backward(const Tensor& dy, Tensor& dgamma, Tensor& dbeta);

    int channels;
    double eps, momentum;
    const std::string layer_id;

private:
    Param* running_mean_;
    Param* running_var_;
    Tensor xhat_, gamma_cache_;
    std::vector<double> invstd_;
    bool training_ = false;
    int n_ = 0, spatial_ = 0;
};

class Linear {
public:
    Linear(ParamStore& ps, const std::string& name, int in_dim, int out_dim,
           std::mt19937_64& rng);
    Tensor forward(const Tensor& x);  // [N,in] -> [N,out]
    Tensor backward(const Tensor& dy);

    int in_dim, out_dim;

private:
    Param* w_;  // [out, in]
    Param* b_;
    Tensor x_cache_;
};

class ReLU {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

private:
    std::vector<std::uint8_t> mask_;
};

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

Tensor upsample2x_3d(const Tensor& x);                                   // [N,C,D,H,W]
Tensor upsample2x_3d_backward(const Tensor& dy, const std::vector<int>& in_shape);

Tensor global_avg_pool2d(const Tensor& x);  // [N,C,H,W] -> [N,C]
Tensor global_avg_pool2d_backward(const Tensor& dy, const std::vector<int>& in_shape);

// Mean binary cross-entropy over all voxels of the batch, probabilities
// clamped to [eps, 1-eps]. Returns loss; fills dprobs when given.
double bce(const Tensor& probs, const Tensor& targets, Tensor* dprobs, double eps = 1e-7);

// ---------------------------------------------------------------------------
// Reference architectures.

struct BnLayerInfo {
    std::string id;
    int channels;
};

// Residual CNN: stem conv + 4 stride-2 residual stages + global average
// pooling + linear projection to the embedding dimension.
class Encoder2D {
public:
    Encoder2D(ParamStore& ps, const EncoderConfig& cfg, std::mt19937_64& rng);

    Tensor forward(const Tensor& images, AffineProvider& affine, const std::vector<int>& cls,
                   bool training);
    Tensor backward(const Tensor& dembed, AffineProvider& affine);

    const std::vector<BnLayerInfo>& bn_layers() const { return bn_layers_; }
    const EncoderConfig& config() const { return cfg_; }

private:
    struct Stage {
        std::unique_ptr<Conv2d> conv1, conv2, proj;
        std::unique_ptr<BatchNorm> bn1, bn2;
        ReLU relu1, relu2;
        Tensor skip_cache;
    };

    Tensor bn_apply(BatchNorm& bn, const Tensor& x, AffineProvider& affine,
                    const std::vector<int>& cls, bool training);
    Tensor bn_unapply(BatchNorm& bn, const Tensor& dy, AffineProvider& affine);

    EncoderConfig cfg_;
    std::unique_ptr<Conv2d> stem_;
    std::unique_ptr<BatchNorm> stem_bn_;
    ReLU stem_relu_;
    std::vector<Stage> stages_;
    std::unique_ptr<Linear> fc_;
    std::vector<BnLayerInfo> bn_layers_;
    std::vector<int> cls_cache_;
    std::vector<int> pool_in_shape_;
};

// 3D occupancy decoder: linear seed to a 4^3 volume, then nearest-neighbor
// upsampling interleaved with exactly num_layers 3D convolutions, terminal
// sigmoid. Output is [N, R^3] probabilities.
class Decoder3D {
public:
    Decoder3D(ParamStore& ps, const DecoderConfig& cfg, std::mt19937_64& rng);

    Tensor forward(const Tensor& z, AffineProvider& affine, const std::vector<int>& cls,
                   bool training);
    Tensor backward(const Tensor& dprobs, AffineProvider& affine);

    const std::vector<BnLayerInfo>& bn_layers() const { return bn_layers_; }
    const DecoderConfig& config() const { return cfg_; }

private:
    DecoderConfig cfg_;
    std::unique_ptr<Linear> fc_;
    std::vector<std::unique_ptr<Conv3d>> convs_;
    std::vector<std::unique_ptr<BatchNorm>> bns_;
    std::vector<BnLayerInfo> bn_layers_;
    std::vector<ReLU> relus_;
    std::vector<bool> upsample_before_;  // per conv
    std::vector<std::vector<int>> up_in_shapes_;
    std::vector<int> seed_shape_;
    std::vector<int> cls_cache_;
    Tensor probs_cache_;
};

// Small 3D conv encoder for the average-shape prior pathway: two stride-2
// convolutions, ReLU, global pooling, linear projection.
class ShapeEncoder3D {
public:
    ShapeEncoder3D(ParamStore& ps, int resolution, int out_dim, double width_scale,
                   std::mt19937_64& rng);

    Tensor forward(const Tensor& fields);  // [N, 1, R, R, R] -> [N, out_dim]
    Tensor backward(const Tensor& dembed);

private:
    std::unique_ptr<Conv3d> conv1_, conv2_;
    ReLU relu1_, relu2_;
    std::unique_ptr<Linear> fc_;
    std::vector<int> pool_in_shape_;
    int spatial_out_ = 0;
};

}  // namespace fewrec::nn

#endif
