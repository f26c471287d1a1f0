#ifndef FEWREC_REPORT_HPP
#define FEWREC_REPORT_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fewrec/model.hpp"
#include "fewrec/training.hpp"

namespace fewrec {

struct ReportRow {
    std::string class_id;
    std::string method;         // variant name, e.g. "cgce"
    int shots = 0;              // 0 for baselines without a support set
    double mean_iou = 0.0;
    double relative_gain = 0.0; // vs ZS on the same query set
    int n_queries = 0;
};

// Mean test-split IoU per class at threshold 0.5. Each evaluated class must
// be predictable on the model (adapted when the variant is conditioned).
std::vector<ReportRow> evaluate(ReconstructionModel& model,
                                const std::map<std::string, std::vector<SamplePair>>& queries,
                                double threshold = 0.5, int shots = 0);

// Fills relative_gain = (mean_iou - zs)/zs per class, and returns the
// unweighted class mean of the gains.
double relative_gain(std::vector<ReportRow>& rows, const std::vector<ReportRow>& zs_rows);

enum class AblationKind { gce_rand, codebook_knockout, placement_sweep };
AblationKind ablation_kind_from_string(const std::string& s);

struct AblationResult {
    std::vector<ReportRow> rows;
    nlohmann::json details = nlohmann::json::object();
};

// gce_rand: evaluate with each query conditioned on a seeded-random other
// class. codebook_knockout: per-codebook voxel-difference summary against the
// unablated reconstruction. Model variant must support the requested kind.
AblationResult run_ablation(ReconstructionModel& model, AblationKind kind,
                            const std::map<std::string, std::vector<SamplePair>>& queries,
                            std::uint64_t seed);

// The eight conditioning-placement configurations swept by the placement
// ablation, in reporting order.
const std::vector<PriorKind>& placement_sweep_kinds();

// Trains each placement configuration on the base classes of the manifest,
// adapts it to every novel class with `shots` support pairs, and reports one
// row per configuration with its mean novel-class IoU.
std::vector<ReportRow> run_placement_sweep(const DatasetManifest& manifest,
                                           const std::string& manifest_dir,
                                           ModelConfig model_template, TrainConfig train_cfg,
                                           AdaptConfig adapt_cfg, int shots);

enum class ReportFormat { csv, markdown };
std::string emit_report(const std::vector<ReportRow>& rows, ReportFormat format);

}  // namespace fewrec

#endif
