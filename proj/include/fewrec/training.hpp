#ifndef FEWREC_TRAINING_HPP
#define FEWREC_TRAINING_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fewrec/image.hpp"
#include "fewrec/manifest.hpp"
#include "fewrec/model.hpp"
#include "fewrec/voxel.hpp"

namespace fewrec {

enum class OptimizerKind { adam, sgd_momentum };

struct TrainConfig {
    int epochs = 25;
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 1e-4;
    double momentum = 0.9;
    int batch_size = 32;
    std::uint64_t seed = 0;
};

struct AdaptConfig {
    int max_steps = 200;
    double learning_rate = 0.01;
    double momentum = 0.9;
    int patience = 20;  // plateau steps on support loss before stopping
};

struct SamplePair {
    Image image;
    VoxelGrid shape;
    std::string class_id;
};

struct FewShotEpisode {
    std::string class_id;
    std::vector<SamplePair> support;
    std::vector<SamplePair> query;
};

struct LossCurvePoint {
    int epoch = 0;
    std::string split;
    double loss = 0.0;
    double mean_iou = 0.0;
};

// Stateful first-order optimizers applied to a named subset of parameters.
class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(ParamStore& ps, const std::vector<std::string>& names) = 0;
};

class AdamOptimizer : public Optimizer {
public:
    AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(ParamStore& ps, const std::vector<std::string>& names) override;

private:
    double lr_, beta1_, beta2_, eps_;
    struct State {
        std::vector<double> m, v;
        long t = 0;
    };
    std::map<std::string, State> state_;
};

class SgdMomentumOptimizer : public Optimizer {
public:
    SgdMomentumOptimizer(double lr, double momentum);
    void step(ParamStore& ps, const std::vector<std::string>& names) override;

private:
    double lr_, momentum_;
    std::map<std::string, std::vector<double>> velocity_;
};

// Loads images and shapes referenced by a manifest. Empty class_id/split
// select everything.
std::vector<SamplePair> load_pairs(const DatasetManifest& manifest,
                                   const std::string& manifest_dir,
                                   const std::string& class_id = "",
                                   const std::string& split = "");

// Copies pairs into batched tensors: images [N,3,H,W], targets [N,R^3].
Tensor images_tensor(const std::vector<const SamplePair*>& batch, int image_size);
Tensor targets_tensor(const std::vector<const SamplePair*>& batch, int resolution);

struct TrainResult {
    std::vector<LossCurvePoint> curve;
};

// Joint optimization of backbone and base-class conditioning parameters.
// Every class id appearing in items must already be registered on the model.
TrainResult train_base(ReconstructionModel& model, const std::vector<SamplePair>& items,
                       const TrainConfig& cfg,
                       const std::vector<SamplePair>* eval_items = nullptr);

struct AdaptResult {
    int steps_run = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// Few-shot novel-class adaptation: frees only the variant's class-specific
// parameters and fits them to the support set with SGD momentum. The
// average-shape variant instead computes its prior field from the support
// shapes. Variants without class parameters are a configuration error.
AdaptResult adapt_novel(ReconstructionModel& model, const FewShotEpisode& episode,
                        const AdaptConfig& cfg);

struct OnnResult {
    int index = -1;
    double score = 0.0;
};

// Oracle nearest neighbor: argmax IoU over a database (or a seeded K-subset
// of it), ties broken by lowest index. k <= 0 means the full database.
OnnResult onn_retrieve(const VoxelGrid& query, const std::vector<VoxelGrid>& db, int k,
                       std::uint64_t seed);

void write_loss_curve_csv(const std::vector<LossCurvePoint>& curve, const std::string& path);

}  // namespace fewrec

#endif
