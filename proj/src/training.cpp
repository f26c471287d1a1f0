#include "fewrec/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "fewrec/binvox.hpp"
#include "fewrec/nn.hpp"
#include "fewrec/rng.hpp"

namespace fewrec {

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(ParamStore& ps, const std::vector<std::string>& names) {
    for (const auto& name : names) {
        auto& p = ps.get(name);
        auto& st = state_[name];
        std::size_t n = p.value.numel();
        if (st.m.empty()) {
            st.m.assign(n, 0.0);
            st.v.assign(n, 0.0);
        }
        ++st.t;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
        for (std::size_t i = 0; i < n; ++i) {
            double g = p.grad[i];
            st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
            st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
            p.value[i] -= lr_ * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + eps_);
        }
    }
}

SgdMomentumOptimizer::SgdMomentumOptimizer(double lr, double momentum)
    : lr_(lr), momentum_(momentum) {}

void SgdMomentumOptimizer::step(ParamStore& ps, const std::vector<std::string>& names) {
    for (const auto& name : names) {
        auto& p = ps.get(name);
        std::size_t n = p.value.numel();
        auto& vel = velocity_[name];
        if (vel.empty()) vel.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            vel[i] = momentum_ * vel[i] + p.grad[i];
            p.value[i] -= lr_ * vel[i];
        }
    }
}

std::vector<SamplePair> load_pairs(const DatasetManifest& manifest,
                                   const std::string& manifest_dir, const std::string& class_id,
                                   const std::string& split) {
    namespace fs = std::filesystem;
    std::vector<SamplePair> out;
    std::map<std::string, VoxelGrid> shape_cache;
    for (const auto& e : manifest.entries) {
        if (!class_id.empty() && e.class_id != class_id) continue;
        if (!split.empty() && e.split != split) continue;
        SamplePair p;
        p.class_id = e.class_id;
        p.image = load_ppm((fs::path(manifest_dir) / e.image).string());
        auto it = shape_cache.find(e.shape);
        if (it == shape_cache.end()) {
            it = shape_cache.emplace(e.shape, load_binvox((fs::path(manifest_dir) / e.shape).string()))
                     .first;
        }
        p.shape = it->second;
        out.push_back(std::move(p));
    }
    return out;
}

Tensor images_tensor(const std::vector<const SamplePair*>& batch, int image_size) {
    int n = static_cast<int>(batch.size());
    Tensor t({n, 3, image_size, image_size});
    for (int i = 0; i < n; ++i) {
        const Image& img = batch[static_cast<std::size_t>(i)]->image;
        if (img.height != image_size || img.width != image_size) {
            throw DataError("image size mismatch: got " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + ", model expects " +
                            std::to_string(image_size));
        }
        std::copy(img.data.begin(), img.data.end(),
                  t.data() + static_cast<std::size_t>(i) * img.data.size());
    }
    return t;
}

Tensor targets_tensor(const std::vector<const SamplePair*>& batch, int resolution) {
    int n = static_cast<int>(batch.size());
    std::size_t vox = static_cast<std::size_t>(resolution) * resolution * resolution;
    Tensor t({n, static_cast<int>(vox)});
    for (int i = 0; i < n; ++i) {
        const VoxelGrid& g = batch[static_cast<std::size_t>(i)]->shape;
        if (g.resolution() != resolution) {
            throw DataError("voxel resolution mismatch: got " + std::to_string(g.resolution()) +
                            ", model outputs " + std::to_string(resolution));
        }
        for (std::size_t v = 0; v < vox; ++v) {
            t[static_cast<std::size_t>(i) * vox + v] = g.occupancy()[v] ? 1.0 : 0.0;
        }
    }
    return t;
}

namespace {

double batch_mean_iou(const Tensor& probs, const std::vector<const SamplePair*>& batch,
                      int resolution) {
    std::size_t vox = static_cast<std::size_t>(resolution) * resolution * resolution;
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        OccupancyField f(resolution);
        std::copy(probs.data() + i * vox, probs.data() + (i + 1) * vox,
                  f.probabilities().begin());
        total += iou(threshold(f, 0.5), batch[i]->shape);
    }
    return total / static_cast<double>(batch.size());
}

LossCurvePoint eval_epoch(ReconstructionModel& model, const std::vector<SamplePair>& items,
                          int epoch, const std::string& split, int batch_size) {
    const int s = model.config().encoder.input_size;
    const int r = model.config().decoder.output_resolution;
    double loss_sum = 0.0, iou_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(batch_size)) {
        std::vector<const SamplePair*> batch;
        std::vector<int> cls;
        for (std::size_t i = start; i < std::min(items.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
            batch.push_back(&items[i]);
            cls.push_back(model.class_index(items[i].class_id));
        }
        Tensor probs = model.forward(images_tensor(batch, s), cls, /*training=*/false);
        loss_sum += nn::bce(probs, targets_tensor(batch, r), nullptr);
        iou_sum += batch_mean_iou(probs, batch, r);
        ++n_batches;
    }
    return {epoch, split, loss_sum / static_cast<double>(n_batches),
            iou_sum / static_cast<double>(n_batches)};
}

}  // namespace

TrainResult train_base(ReconstructionModel& model, const std::vector<SamplePair>& items,
                       const TrainConfig& cfg, const std::vector<SamplePair>* eval_items) {
    if (items.empty()) throw ConfigError("train_base: empty training set");
    if (cfg.epochs < 1) throw ConfigError("train_base: epochs must be >= 1");
    if (cfg.learning_rate <= 0.0) throw ConfigError("train_base: learning_rate must be > 0");
    for (const auto& it : items) {
        if (!model.has_class(it.class_id)) {
            throw ConfigError("train_base: class '" + it.class_id +
                              "' in the dataset is not registered on the model");
        }
    }

    std::unique_ptr<Optimizer> opt;
    if (cfg.optimizer == OptimizerKind::adam) {
        opt = std::make_unique<AdamOptimizer>(cfg.learning_rate);
    } else {
        opt = std::make_unique<SgdMomentumOptimizer>(cfg.learning_rate, cfg.momentum);
    }

    std::vector<std::string> trainable;
    for (const auto& name : model.params().names()) {
        if (model.params().get(name).trainable) trainable.push_back(name);
    }

    const int s = model.config().encoder.input_size;
    const int r = model.config().decoder.output_resolution;

    TrainResult res;
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto rng = make_rng(derive_seed(cfg.seed, "epoch", epoch));
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0, iou_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<const SamplePair*> batch;
            std::vector<int> cls;
            for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i) {
                batch.push_back(&items[order[i]]);
                cls.push_back(model.class_index(batch.back()->class_id));
            }
            model.params().zero_grad();
            Tensor probs = model.forward(images_tensor(batch, s), cls, /*training=*/true);
            Tensor dprobs;
            loss_sum += nn::bce(probs, targets_tensor(batch, r), &dprobs);
            iou_sum += batch_mean_iou(probs, batch, r);
            model.backward(dprobs);
            opt->step(model.params(), trainable);
            ++n_batches;
        }
        res.curve.push_back({epoch, "train", loss_sum / static_cast<double>(n_batches),
                             iou_sum / static_cast<double>(n_batches)});
        if (eval_items && !eval_items->empty()) {
            res.curve.push_back(eval_epoch(model, *eval_items, epoch, "test", cfg.batch_size));
        }
    }
    return res;
}

AdaptResult adapt_novel(ReconstructionModel& model, const FewShotEpisode& episode,
                        const AdaptConfig& cfg) {
    if (episode.support.empty()) throw ConfigError("adapt_novel: empty support set");
    for (const auto& p : episode.support) {
        if (p.class_id != episode.class_id) {
            throw ConfigError("adapt_novel: support pair class '" + p.class_id +
                              "' does not match episode class '" + episode.class_id + "'");
        }
    }
    const PriorKind kind = model.config().kind;
    if (kind == PriorKind::zs || kind == PriorKind::as_) {
        throw ConfigError("adapt_novel: variant '" + to_string(kind) +
                          "' has no class-specific parameters");
    }

    const int s = model.config().encoder.input_size;
    const int r = model.config().decoder.output_resolution;
    std::vector<const SamplePair*> batch;
    std::vector<VoxelGrid> shapes;
    for (const auto& p : episode.support) {
        batch.push_back(&p);
        shapes.push_back(p.shape);
    }

    AdaptResult res;

    if (kind == PriorKind::wallace_avg) {
        model.set_wallace_prior(episode.class_id, wallace_prior(shapes));
        std::vector<int> cls(batch.size(), model.class_index(episode.class_id));
        Tensor probs = model.forward(images_tensor(batch, s), cls, /*training=*/false);
        res.initial_loss = res.final_loss = nn::bce(probs, targets_tensor(batch, r), nullptr);
        return res;
    }

    if (!model.has_class(episode.class_id)) {
        model.add_novel_class(episode.class_id);
    } else if (model.is_base_class(episode.class_id)) {
        throw ConfigError("adapt_novel: '" + episode.class_id + "' is a base class");
    }
    auto names = model.adaptable_param_names(episode.class_id);
    std::vector<int> cls(batch.size(), model.class_index(episode.class_id));
    Tensor images = images_tensor(batch, s);
    Tensor targets = targets_tensor(batch, r);

    SgdMomentumOptimizer opt(cfg.learning_rate, cfg.momentum);
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int step = 0; step < cfg.max_steps; ++step) {
        model.params().zero_grad();
        // Eval-mode statistics keep the frozen backbone byte-identical.
        Tensor probs = model.forward(images, cls, /*training=*/false);
        Tensor dprobs;
        double loss = nn::bce(probs, targets, &dprobs);
        if (step == 0) res.initial_loss = loss;
        res.final_loss = loss;
        res.steps_run = step + 1;
        if (loss < best - 1e-9) {
            best = loss;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
        model.backward(dprobs);
        opt.step(model.params(), names);
    }
    model.params().zero_grad();
    return res;
}

OnnResult onn_retrieve(const VoxelGrid& query, const std::vector<VoxelGrid>& db, int k,
                       std::uint64_t seed) {
    if (db.empty()) throw ConfigError("onn_retrieve: empty shape database");
    std::vector<std::size_t> idx(db.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (k > 0 && static_cast<std::size_t>(k) < db.size()) {
        auto rng = make_rng(derive_seed(seed, "onn-subset"));
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(k));
        std::sort(idx.begin(), idx.end());
    } else if (k > 0 && static_cast<std::size_t>(k) > db.size()) {
        throw ConfigError("onn_retrieve: k exceeds database size");
    }
    OnnResult best;
    for (std::size_t i : idx) {
        double score = iou(query, db[i]);
        if (score > best.score || best.index < 0) {
            best.score = score;
            best.index = static_cast<int>(i);
        }
    }
    return best;
}

void write_loss_curve_csv(const std::vector<LossCurvePoint>& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write loss curve to " + path);
    out << "epoch,split,loss,mean_iou\n";
    for (const auto& p : curve) {
        out << p.epoch << "," << p.split << "," << p.loss << "," << p.mean_iou << "\n";
    }
}

}  // namespace fewrec
