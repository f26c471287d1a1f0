#ifndef FEWREC_MODEL_HPP
#define FEWREC_MODEL_HPP

#include <memory>
#include <string>
#include <vector>

#include "fewrec/image.hpp"
#include "fewrec/nn.hpp"
#include "fewrec/priors.hpp"
#include "fewrec/voxel.hpp"

namespace fewrec {

struct ModelConfig {
    PriorKind kind = PriorKind::zs;
    nn::EncoderConfig encoder;
    nn::DecoderConfig decoder;  // input_dim is derived from kind + embedding_dim
    int num_codebooks = 5;      // M
    int codes_per_book = 6;     // m
    std::uint64_t seed = 0;
};

// Conditional encoder-decoder with a pluggable class shape prior. Owns all
// parameters (ParamStore) and the variant wiring: which batch-norm layers are
// conditioned, and how the decoder input vector is assembled.
class ReconstructionModel {
public:
    ReconstructionModel(const ModelConfig& cfg, const std::vector<std::string>& base_classes);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return ps_; }
    const ParamStore& params() const { return ps_; }

    const std::vector<std::string>& classes() const { return classes_; }
    bool has_class(const std::string& id) const;
    int class_index(const std::string& id) const;
    bool is_base_class(const std::string& id) const;

    // Registers a novel class and initializes its conditioning parameters
    // (GCE: mean of base embeddings; CGCE/CAB logits: U(-0.4,0.4); CBN rows:
    // N(1,0.2)). No-op parameters for unconditioned variants.
    void add_novel_class(const std::string& id);

    // Batched differentiable path. images [N,3,H,W] -> probs [N,R^3].
    Tensor forward(const Tensor& images, const std::vector<int>& cls, bool training);
    void backward(const Tensor& dprobs);

    // Eval-mode single-image prediction.
    OccupancyField predict(const Image& image, const std::string& class_id);

    // Zero a codebook's contribution in CGCE composition (-1 restores all).
    void set_knockout(int book);

    // Average-shape prior pathway (wallace variant only).
    void set_wallace_prior(const std::string& class_id, const OccupancyField& prior);
    bool has_wallace_prior(const std::string& class_id) const;

    // Names of the class-specific parameters freed during novel adaptation.
    std::vector<std::string> adaptable_param_names(const std::string& class_id) const;

    // The embedding composed for a class by the decoder-input prior branch
    // (GCE table row or CGCE composition); config error for other variants.
    std::vector<double> class_embedding(const std::string& class_id) const;

    void save(const std::string& path) const;
    static std::unique_ptr<ReconstructionModel> load(const std::string& path);

    std::string meta_json() const;

private:
    void register_class_params(const std::string& id, bool novel);
    Tensor images_to_tensor(const std::vector<const Image*>& images) const;

    ModelConfig cfg_;
    ParamStore ps_;
    std::vector<std::string> classes_;
    std::size_t num_base_ = 0;

    std::unique_ptr<nn::Encoder2D> encoder_;
    std::unique_ptr<nn::Decoder3D> decoder_;
    std::unique_ptr<nn::ShapeEncoder3D> shape_encoder_;
    std::unique_ptr<nn::AffineProvider> encoder_affine_;
    std::unique_ptr<nn::AffineProvider> decoder_affine_;

    int knockout_book_ = -1;

    // backward caches
    std::vector<int> cls_cache_;
    Tensor prior_fields_cache_;  // wallace: [N,1,R,R,R]
};

}  // namespace fewrec

#endif
