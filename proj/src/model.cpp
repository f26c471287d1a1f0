#include "fewrec/model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "fewrec/checkpoint.hpp"
#include "fewrec/rng.hpp"

namespace fewrec {

namespace {

using nn::AffineProvider;
using nn::BnLayerInfo;

class PlainAffine : public AffineProvider {
public:
    explicit PlainAffine(ParamStore& ps) : ps_(ps) {}

    void register_layer(const BnLayerInfo& l) {
        auto& g = ps_.create(l.id + "/gamma", {l.channels});
        g.value.fill(1.0);
        ps_.create(l.id + "/beta", {l.channels});
    }

    void gamma_beta(const std::string& layer_id, const std::vector<int>& cls, Tensor& gamma,
                    Tensor& beta) override {
        (void)cls;
        const auto& g = ps_.get(layer_id + "/gamma").value;
        const auto& b = ps_.get(layer_id + "/beta").value;
        int n = gamma.dim(0), c = gamma.dim(1);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < c; ++j) {
                gamma[static_cast<std::size_t>(i) * c + j] = g[static_cast<std::size_t>(j)];
                beta[static_cast<std::size_t>(i) * c + j] = b[static_cast<std::size_t>(j)];
            }
        }
    }

    void backward(const std::string& layer_id, const std::vector<int>& cls, const Tensor& dgamma,
                  const Tensor& dbeta) override {
        (void)cls;
        auto& g = ps_.get(layer_id + "/gamma").grad;
        auto& b = ps_.get(layer_id + "/beta").grad;
        int n = dgamma.dim(0), c = dgamma.dim(1);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < c; ++j) {
                g[static_cast<std::size_t>(j)] += dgamma[static_cast<std::size_t>(i) * c + j];
                b[static_cast<std::size_t>(j)] += dbeta[static_cast<std::size_t>(i) * c + j];
            }
        }
    }

private:
    ParamStore& ps_;
};

class CbnAffine : public AffineProvider {
public:
    CbnAffine(ParamStore& ps, const std::vector<std::string>& classes)
        : ps_(ps), classes_(classes) {}

    static std::string row_name(const std::string& class_id, const std::string& layer_id,
                                const char* which) {
        return "priors/cbn/" + class_id + "/" + layer_id + "/" + which;
    }

    void gamma_beta(const std::string& layer_id, const std::vector<int>& cls, Tensor& gamma,
                    Tensor& beta) override {
        int n = gamma.dim(0), c = gamma.dim(1);
        for (int i = 0; i < n; ++i) {
            const std::string& cid = classes_[static_cast<std::size_t>(cls[static_cast<std::size_t>(i)])];
            const auto& g = ps_.get(row_name(cid, layer_id, "gamma")).value;
            const auto& b = ps_.get(row_name(cid, layer_id, "beta")).value;
            for (int j = 0; j < c; ++j) {
                gamma[static_cast<std::size_t>(i) * c + j] = g[static_cast<std::size_t>(j)];
                beta[static_cast<std::size_t>(i) * c + j] = b[static_cast<std::size_t>(j)];
            }
        }
    }

    void backward(const std::string& layer_id, const std::vector<int>& cls, const Tensor& dgamma,
                  const Tensor& dbeta) override {
        int n = dgamma.dim(0), c = dgamma.dim(1);
        for (int i = 0; i < n; ++i) {
            const std::string& cid = classes_[static_cast<std::size_t>(cls[static_cast<std::size_t>(i)])];
            auto& g = ps_.get(row_name(cid, layer_id, "gamma")).grad;
            auto& b = ps_.get(row_name(cid, layer_id, "beta")).grad;
            for (int j = 0; j < c; ++j) {
                g[static_cast<std::size_t>(j)] += dgamma[static_cast<std::size_t>(i) * c + j];
                b[static_cast<std::size_t>(j)] += dbeta[static_cast<std::size_t>(i) * c + j];
            }
        }
    }

private:
    ParamStore& ps_;
    const std::vector<std::string>& classes_;
};

class CabAffine : public AffineProvider {
public:
    CabAffine(ParamStore& ps, const std::vector<std::string>& classes, int M, int m)
        : ps_(ps), classes_(classes), M_(M), m_(m) {}

    static std::string codes_name(const std::string& layer_id) {
        return "priors/cab/" + layer_id + "/codes";
    }
    static std::string logits_name(const std::string& class_id, const std::string& layer_id) {
        return "priors/cab/logits/" + class_id + "/" + layer_id;
    }

    void register_layer(const BnLayerInfo& l, std::mt19937_64& rng) {
        auto& codes = ps_.create(codes_name(l.id), {M_, m_, 2 * l.channels});
        nn::init_uniform(codes.value, 0.4, rng);
    }

    void gamma_beta(const std::string& layer_id, const std::vector<int>& cls, Tensor& gamma,
                    Tensor& beta) override {
        int n = gamma.dim(0), c = gamma.dim(1);
        const auto& codes = ps_.get(codes_name(layer_id)).value;
        std::vector<double> combined(static_cast<std::size_t>(2) * c);
        for (int i = 0; i < n; ++i) {
            const std::string& cid = classes_[static_cast<std::size_t>(cls[static_cast<std::size_t>(i)])];
            const auto& logits = ps_.get(logits_name(cid, layer_id)).value;
            compose_codes(codes.data(), M_, m_, 2 * c, logits.data(), combined.data());
            for (int j = 0; j < c; ++j) {
                gamma[static_cast<std::size_t>(i) * c + j] = combined[static_cast<std::size_t>(j)];
                beta[static_cast<std::size_t>(i) * c + j] =
                    combined[static_cast<std::size_t>(c + j)];
            }
        }
    }

    void backward(const std::string& layer_id, const std::vector<int>& cls, const Tensor& dgamma,
                  const Tensor& dbeta) override {
        int n = dgamma.dim(0), c = dgamma.dim(1);
        auto& codes = ps_.get(codes_name(layer_id));
        std::vector<double> dout(static_cast<std::size_t>(2) * c);
        for (int i = 0; i < n; ++i) {
            const std::string& cid = classes_[static_cast<std::size_t>(cls[static_cast<std::size_t>(i)])];
            auto& logits = ps_.get(logits_name(cid, layer_id));
            for (int j = 0; j < c; ++j) {
                dout[static_cast<std::size_t>(j)] = dgamma[static_cast<std::size_t>(i) * c + j];
                dout[static_cast<std::size_t>(c + j)] = dbeta[static_cast<std::size_t>(i) * c + j];
            }
            compose_codes_backward(codes.value.data(), M_, m_, 2 * c, logits.value.data(),
                                   dout.data(), codes.grad.data(), logits.grad.data());
        }
    }

private:
    ParamStore& ps_;
    const std::vector<std::string>& classes_;
    int M_, m_;
};

}  // namespace

ReconstructionModel::ReconstructionModel(const ModelConfig& cfg,
                                         const std::vector<std::string>& base_classes)
    : cfg_(cfg) {
    cfg_.encoder.conditioning = kind_uses_cab_encoder(cfg_.kind)
                                    ? nn::Conditioning::cab
                                    : (kind_uses_cbn_encoder(cfg_.kind) ? nn::Conditioning::cbn
                                                                        : nn::Conditioning::none);
    cfg_.decoder.conditioning = kind_uses_cab_decoder(cfg_.kind)
                                    ? nn::Conditioning::cab
                                    : (kind_uses_cbn_decoder(cfg_.kind) ? nn::Conditioning::cbn
                                                                        : nn::Conditioning::none);
    cfg_.decoder.input_dim = kind_concatenates_prior(cfg_.kind) ? 2 * cfg_.encoder.embedding_dim
                                                                : cfg_.encoder.embedding_dim;

    auto rng = make_rng(derive_seed(cfg_.seed, "model-init"));
    encoder_ = std::make_unique<nn::Encoder2D>(ps_, cfg_.encoder, rng);
    decoder_ = std::make_unique<nn::Decoder3D>(ps_, cfg_.decoder, rng);

    if (cfg_.kind == PriorKind::wallace_avg) {
        shape_encoder_ = std::make_unique<nn::ShapeEncoder3D>(
            ps_, cfg_.decoder.output_resolution, cfg_.encoder.embedding_dim,
            cfg_.encoder.width_scale, rng);
    }
    if (cfg_.kind == PriorKind::cgce) {
        auto& codes = ps_.create("priors/cgce/codes",
                                 {cfg_.num_codebooks, cfg_.codes_per_book,
                                  cfg_.encoder.embedding_dim});
        nn::init_uniform(codes.value, 0.4, rng);
    }

    auto make_provider = [&](nn::Conditioning cond,
                             const std::vector<BnLayerInfo>& layers) -> std::unique_ptr<AffineProvider> {
        switch (cond) {
            case nn::Conditioning::none: {
                auto p = std::make_unique<PlainAffine>(ps_);
                for (const auto& l : layers) p->register_layer(l);
                return p;
            }
            case nn::Conditioning::cbn:
                return std::make_unique<CbnAffine>(ps_, classes_);
            case nn::Conditioning::cab: {
                auto p = std::make_unique<CabAffine>(ps_, classes_, cfg_.num_codebooks,
                                                     cfg_.codes_per_book);
                for (const auto& l : layers) p->register_layer(l, rng);
                return p;
            }
        }
        throw ConfigError("unhandled conditioning mode");
    };
    encoder_affine_ = make_provider(cfg_.encoder.conditioning, encoder_->bn_layers());
    decoder_affine_ = make_provider(cfg_.decoder.conditioning, decoder_->bn_layers());

    for (const auto& id : base_classes) {
        classes_.push_back(id);
        register_class_params(id, /*novel=*/false);
    }
    num_base_ = classes_.size();
}

bool ReconstructionModel::has_class(const std::string& id) const {
    return std::find(classes_.begin(), classes_.end(), id) != classes_.end();
}

int ReconstructionModel::class_index(const std::string& id) const {
    auto it = std::find(classes_.begin(), classes_.end(), id);
    if (it == classes_.end()) {
        throw ConfigError("unknown class '" + id + "' (not registered/adapted on this model)");
    }
    return static_cast<int>(it - classes_.begin());
}

bool ReconstructionModel::is_base_class(const std::string& id) const {
    auto it = std::find(classes_.begin(), classes_.end(), id);
    return it != classes_.end() &&
           static_cast<std::size_t>(it - classes_.begin()) < num_base_;
}

void ReconstructionModel::add_novel_class(const std::string& id) {
    if (has_class(id)) {
        throw ConfigError("class '" + id + "' already registered");
    }
    classes_.push_back(id);
    register_class_params(id, /*novel=*/true);
}

void ReconstructionModel::register_class_params(const std::string& id, bool novel) {
    auto rng = make_rng(derive_seed(cfg_.seed, "class", id));
    const int emb = cfg_.encoder.embedding_dim;
    const int mm = cfg_.num_codebooks * cfg_.codes_per_book;

    switch (cfg_.kind) {
        case PriorKind::zs:
        case PriorKind::as_:
        case PriorKind::wallace_avg:
            break;  // no learned class-specific parameters
        case PriorKind::gce: {
            auto& e = ps_.create("priors/gce/" + id, {emb});
            if (novel) {
                // average of the learned base-class encodings
                for (std::size_t b = 0; b < num_base_; ++b) {
                    const auto& base = ps_.get("priors/gce/" + classes_[b]).value;
                    for (int d = 0; d < emb; ++d) e.value[static_cast<std::size_t>(d)] += base[static_cast<std::size_t>(d)];
                }
                for (int d = 0; d < emb; ++d) e.value[static_cast<std::size_t>(d)] /= static_cast<double>(num_base_);
            } else {
                nn::init_normal(e.value, 0.0, 1.0, rng);
            }
            break;
        }
        case PriorKind::cgce: {
            auto& l = ps_.create("priors/cgce/logits/" + id, {cfg_.num_codebooks, cfg_.codes_per_book});
            nn::init_uniform(l.value, 0.4, rng);
            (void)mm;
            break;
        }
        case PriorKind::mcce_enc:
        case PriorKind::mcce_dec:
        case PriorKind::mcce_full:
        case PriorKind::hybrid:
        case PriorKind::cab_enc:
        case PriorKind::cab_dec:
        case PriorKind::cab_full: {
            if (cfg_.encoder.conditioning == nn::Conditioning::cbn) {
                for (const auto& layer : encoder_->bn_layers()) {
                    auto& g = ps_.create(CbnAffine::row_name(id, layer.id, "gamma"), {layer.channels});
                    auto& b = ps_.create(CbnAffine::row_name(id, layer.id, "beta"), {layer.channels});
                    nn::init_normal(g.value, 1.0, 0.2, rng);
                    nn::init_normal(b.value, 1.0, 0.2, rng);
                }
            }
            if (cfg_.decoder.conditioning == nn::Conditioning::cbn) {
                for (const auto& layer : decoder_->bn_layers()) {
                    auto& g = ps_.create(CbnAffine::row_name(id, layer.id, "gamma"), {layer.channels});
                    auto& b = ps_.create(CbnAffine::row_name(id, layer.id, "beta"), {layer.channels});
                    nn::init_normal(g.value, 1.0, 0.2, rng);
                    nn::init_normal(b.value, 1.0, 0.2, rng);
                }
            }
            if (cfg_.encoder.conditioning == nn::Conditioning::cab) {
                for (const auto& layer : encoder_->bn_layers()) {
                    auto& l = ps_.create(CabAffine::logits_name(id, layer.id),
                                         {cfg_.num_codebooks, cfg_.codes_per_book});
                    nn::init_uniform(l.value, 0.4, rng);
                }
            }
            if (cfg_.decoder.conditioning == nn::Conditioning::cab) {
                for (const auto& layer : decoder_->bn_layers()) {
                    auto& l = ps_.create(CabAffine::logits_name(id, layer.id),
                                         {cfg_.num_codebooks, cfg_.codes_per_book});
                    nn::init_uniform(l.value, 0.4, rng);
                }
            }
            break;
        }
    }
}

Tensor ReconstructionModel::forward(const Tensor& images, const std::vector<int>& cls,
                                    bool training) {
    if (images.shape().size() != 4 || images.dim(1) != 3 ||
        images.dim(2) != cfg_.encoder.input_size || images.dim(3) != cfg_.encoder.input_size) {
        throw DataError("forward: images must be [N,3," + std::to_string(cfg_.encoder.input_size) +
                        "," + std::to_string(cfg_.encoder.input_size) + "]");
    }
    if (static_cast<std::size_t>(images.dim(0)) != cls.size()) {
        throw DataError("forward: class list length does not match batch");
    }
    cls_cache_ = cls;
    const int n = images.dim(0);
    const int emb = cfg_.encoder.embedding_dim;

    Tensor e = encoder_->forward(images, *encoder_affine_, cls, training);

    Tensor z;
    switch (cfg_.kind) {
        case PriorKind::zs:
        case PriorKind::as_:
        case PriorKind::mcce_enc:
        case PriorKind::mcce_dec:
        case PriorKind::mcce_full:
        case PriorKind::cab_enc:
        case PriorKind::cab_dec:
        case PriorKind::cab_full:
        case PriorKind::hybrid:
            z = std::move(e);
            break;
        case PriorKind::gce: {
            z = Tensor({n, 2 * emb});
            for (int i = 0; i < n; ++i) {
                const auto& prior = ps_.get("priors/gce/" + classes_[static_cast<std::size_t>(cls[static_cast<std::size_t>(i)])]).value;
                for (int d = 0; d < emb; ++d) {
                    z[static_cast<std::size_t>(i) * 2 * emb + d] = e[static_cast<std::size_t>(i) * emb + d];
                    z[static_cast<std::size_t>(i) * 2 * emb + emb + d] = prior[static_cast<std::size_t>(d)];
                }
            }
            break;
        }
        case PriorKind::cgce: {
            const auto& codes = ps_.get("priors/cgce/codes").value;
            z = Tensor({n, 2 * emb});
            std::vector<double> prior(static_cast<std::size_t>(emb));
            for (int i = 0; i < n; ++i) {
                const auto& logits = ps_.get("priors/cgce/logits/" + classes_[static_cast<std::size_t>(cls[static_cast<std::size_t>(i)])]).value;
                compose_codes(codes.data(), cfg_.num_codebooks, cfg_.codes_per_book, emb,
                              logits.data(), prior.data(), knockout_book_);
                for (int d = 0; d < emb; ++d) {
                    z[static_cast<std::size_t>(i) * 2 * emb + d] = e[static_cast<std::size_t>(i) * emb + d];
                    z[static_cast<std::size_t>(i) * 2 * emb + emb + d] = prior[static_cast<std::size_t>(d)];
                }
            }
            break;
        }
        case PriorKind::wallace_avg: {
            const int r = cfg_.decoder.output_resolution;
            prior_fields_cache_ = Tensor({n, 1, r, r, r});
            for (int i = 0; i < n; ++i) {
                const std::string& cid = classes_[static_cast<std::size_t>(cls[static_cast<std::size_t>(i)])];
                const std::string name = "priors/wallace/field/" + cid;
                if (!ps_.contains(name)) {
                    throw ConfigError("wallace prior not set for class '" + cid + "'");
                }
                const auto& field = ps_.get(name).value;
                std::copy(field.vec().begin(), field.vec().end(),
                          prior_fields_cache_.data() + static_cast<std::size_t>(i) * field.numel());
            }
            Tensor se = shape_encoder_->forward(prior_fields_cache_);
            z = std::move(e);
            for (std::size_t i = 0; i < z.numel(); ++i) z[i] += se[i];  // element-wise sum fusion
            break;
        }
    }
    return decoder_->forward(z, *decoder_affine_, cls, training);
}

void ReconstructionModel::backward(const Tensor& dprobs) {
    const int emb = cfg_.encoder.embedding_dim;
    Tensor dz = decoder_->backward(dprobs, *decoder_affine_);
    const int n = dz.dim(0);

    Tensor de({n, emb});
    switch (cfg_.kind) {
        case PriorKind::zs:
        case PriorKind::as_:
        case PriorKind::mcce_enc:
        case PriorKind::mcce_dec:
        case PriorKind::mcce_full:
        case PriorKind::cab_enc:
        case PriorKind::cab_dec:
        case PriorKind::cab_full:
        case PriorKind::hybrid:
            de = std::move(dz);
            break;
        case PriorKind::gce: {
            for (int i = 0; i < n; ++i) {
                auto& prior = ps_.get("priors/gce/" + classes_[static_cast<std::size_t>(cls_cache_[static_cast<std::size_t>(i)])]);
                for (int d = 0; d < emb; ++d) {
                    de[static_cast<std::size_t>(i) * emb + d] = dz[static_cast<std::size_t>(i) * 2 * emb + d];
                    prior.grad[static_cast<std::size_t>(d)] += dz[static_cast<std::size_t>(i) * 2 * emb + emb + d];
                }
            }
            break;
        }
        case PriorKind::cgce: {
            auto& codes = ps_.get("priors/cgce/codes");
            for (int i = 0; i < n; ++i) {
                auto& logits = ps_.get("priors/cgce/logits/" + classes_[static_cast<std::size_t>(cls_cache_[static_cast<std::size_t>(i)])]);
                const double* dprior = dz.data() + static_cast<std::size_t>(i) * 2 * emb + emb;
                compose_codes_backward(codes.value.data(), cfg_.num_codebooks, cfg_.codes_per_book,
                                       emb, logits.value.data(), dprior, codes.grad.data(),
                                       logits.grad.data(), knockout_book_);
                for (int d = 0; d < emb; ++d) {
                    de[static_cast<std::size_t>(i) * emb + d] = dz[static_cast<std::size_t>(i) * 2 * emb + d];
                }
            }
            break;
        }
        case PriorKind::wallace_avg: {
            shape_encoder_->backward(dz);
            de = std::move(dz);
            break;
        }
    }
    encoder_->backward(de, *encoder_affine_);
}

OccupancyField ReconstructionModel::predict(const Image& image, const std::string& class_id) {
    int cls = 0;
    if (kind_has_class_params(cfg_.kind) || cfg_.kind == PriorKind::wallace_avg) {
        cls = class_index(class_id);
    }
    const int s = cfg_.encoder.input_size;
    if (image.height != s || image.width != s) {
        throw DataError("predict: image must be " + std::to_string(s) + "x" + std::to_string(s));
    }
    Tensor images({1, 3, s, s}, std::vector<double>(image.data));
    Tensor probs = forward(images, {cls}, /*training=*/false);
    const int r = cfg_.decoder.output_resolution;
    OccupancyField field(r);
    std::copy(probs.vec().begin(), probs.vec().end(), field.probabilities().begin());
    return field;
}

void ReconstructionModel::set_knockout(int book) {
    if (book >= 0 && cfg_.kind != PriorKind::cgce) {
        throw ConfigError("codebook knockout requires the cgce variant, model is " +
                          to_string(cfg_.kind));
    }
    if (book >= cfg_.num_codebooks) {
        throw ConfigError("knockout codebook index " + std::to_string(book) + " out of range");
    }
    knockout_book_ = book < 0 ? -1 : book;
}

void ReconstructionModel::set_wallace_prior(const std::string& class_id,
                                            const OccupancyField& prior) {
    if (cfg_.kind != PriorKind::wallace_avg) {
        throw ConfigError("wallace prior only applies to the wallace variant");
    }
    if (prior.resolution() != cfg_.decoder.output_resolution) {
        throw DataError("wallace prior resolution mismatch");
    }
    const std::string name = "priors/wallace/field/" + class_id;
    if (!ps_.contains(name)) {
        ps_.create(name, {prior.resolution(), prior.resolution(), prior.resolution()},
                   /*trainable=*/false);
    }
    auto& p = ps_.get(name);
    std::copy(prior.probabilities().begin(), prior.probabilities().end(), p.value.vec().begin());
    if (!has_class(class_id)) classes_.push_back(class_id);
}

bool ReconstructionModel::has_wallace_prior(const std::string& class_id) const {
    return ps_.contains("priors/wallace/field/" + class_id);
}

std::vector<std::string> ReconstructionModel::adaptable_param_names(
    const std::string& class_id) const {
    switch (cfg_.kind) {
        case PriorKind::zs:
        case PriorKind::as_:
            throw ConfigError("variant '" + to_string(cfg_.kind) +
                              "' has no class-specific parameters to adapt");
        case PriorKind::wallace_avg:
            return {};  // prior is computed, not optimized
        case PriorKind::gce:
            return {"priors/gce/" + class_id};
        case PriorKind::cgce:
            return {"priors/cgce/logits/" + class_id};
        case PriorKind::mcce_enc:
        case PriorKind::mcce_dec:
        case PriorKind::mcce_full:
            return ps_.names_with_prefix("priors/cbn/" + class_id + "/");
        case PriorKind::cab_enc:
        case PriorKind::cab_dec:
        case PriorKind::cab_full:
            return ps_.names_with_prefix("priors/cab/logits/" + class_id + "/");
        case PriorKind::hybrid: {
            auto names = ps_.names_with_prefix("priors/cab/logits/" + class_id + "/");
            auto cbn = ps_.names_with_prefix("priors/cbn/" + class_id + "/");
            names.insert(names.end(), cbn.begin(), cbn.end());
            return names;
        }
    }
    throw ConfigError("unhandled prior kind");
}

std::vector<double> ReconstructionModel::class_embedding(const std::string& class_id) const {
    int idx = class_index(class_id);
    (void)idx;
    if (cfg_.kind == PriorKind::gce) {
        return ps_.get("priors/gce/" + class_id).value.vec();
    }
    if (cfg_.kind == PriorKind::cgce) {
        const auto& codes = ps_.get("priors/cgce/codes").value;
        const auto& logits = ps_.get("priors/cgce/logits/" + class_id).value;
        std::vector<double> out(static_cast<std::size_t>(cfg_.encoder.embedding_dim));
        compose_codes(codes.data(), cfg_.num_codebooks, cfg_.codes_per_book,
                      cfg_.encoder.embedding_dim, logits.data(), out.data(), knockout_book_);
        return out;
    }
    throw ConfigError("class_embedding: variant '" + to_string(cfg_.kind) +
                      "' has no decoder-input embedding");
}

std::string ReconstructionModel::meta_json() const {
    nlohmann::json j;
    j["kind"] = to_string(cfg_.kind);
    j["encoder"] = {{"input_size", cfg_.encoder.input_size},
                    {"embedding_dim", cfg_.encoder.embedding_dim},
                    {"width_scale", cfg_.encoder.width_scale}};
    j["decoder"] = {{"output_resolution", cfg_.decoder.output_resolution},
                    {"num_layers", cfg_.decoder.num_layers},
                    {"width_scale", cfg_.decoder.width_scale}};
    j["num_codebooks"] = cfg_.num_codebooks;
    j["codes_per_book"] = cfg_.codes_per_book;
    j["seed"] = cfg_.seed;
    j["base_classes"] = std::vector<std::string>(classes_.begin(),
                                                 classes_.begin() + static_cast<long>(num_base_));
    j["novel_classes"] = std::vector<std::string>(classes_.begin() + static_cast<long>(num_base_),
                                                  classes_.end());
    return j.dump();
}

void ReconstructionModel::save(const std::string& path) const {
    save_checkpoint(ps_, meta_json(), path);
}

std::unique_ptr<ReconstructionModel> ReconstructionModel::load(const std::string& path) {
    ParamStore scratch;
    std::string meta = load_checkpoint(path, scratch);
    nlohmann::json j = nlohmann::json::parse(meta);

    ModelConfig cfg;
    cfg.kind = prior_kind_from_string(j.at("kind").get<std::string>());
    cfg.encoder.input_size = j.at("encoder").at("input_size").get<int>();
    cfg.encoder.embedding_dim = j.at("encoder").at("embedding_dim").get<int>();
    cfg.encoder.width_scale = j.at("encoder").at("width_scale").get<double>();
    cfg.decoder.output_resolution = j.at("decoder").at("output_resolution").get<int>();
    cfg.decoder.num_layers = j.at("decoder").at("num_layers").get<int>();
    cfg.decoder.width_scale = j.at("decoder").at("width_scale").get<double>();
    cfg.num_codebooks = j.at("num_codebooks").get<int>();
    cfg.codes_per_book = j.at("codes_per_book").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();

    auto base = j.at("base_classes").get<std::vector<std::string>>();
    auto model = std::make_unique<ReconstructionModel>(cfg, base);
    for (const auto& id : j.at("novel_classes").get<std::vector<std::string>>()) {
        if (model->cfg_.kind == PriorKind::wallace_avg) {
            model->classes_.push_back(id);
        } else if (kind_has_class_params(model->cfg_.kind)) {
            model->add_novel_class(id);
        } else {
            model->classes_.push_back(id);
        }
    }
    // Overwrite freshly initialized values with the stored ones.
    load_checkpoint(path, model->ps_);
    return model;
}

}  // namespace fewrec
