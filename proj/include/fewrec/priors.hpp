#ifndef FEWREC_PRIORS_HPP
#define FEWREC_PRIORS_HPP

#include <map>
#include <string>
#include <vector>

#include "fewrec/errors.hpp"
#include "fewrec/voxel.hpp"

namespace fewrec {

// Which conditioning structures exist and where they sit in the network.
enum class PriorKind {
    zs,         // no class conditioning (also the AS baseline)
    as_,        // ZS architecture trained on all classes
    wallace_avg,
    gce,
    cgce,
    mcce_enc,
    mcce_dec,
    mcce_full,
    cab_enc,
    cab_dec,
    cab_full,
    hybrid,  // CAB encoder + CBN decoder
};

PriorKind prior_kind_from_string(const std::string& s);
std::string to_string(PriorKind kind);

bool kind_has_class_params(PriorKind kind);
bool kind_concatenates_prior(PriorKind kind);  // decoder input 256-d
bool kind_uses_cbn_encoder(PriorKind kind);
bool kind_uses_cbn_decoder(PriorKind kind);
bool kind_uses_cab_encoder(PriorKind kind);
bool kind_uses_cab_decoder(PriorKind kind);

// ---------------------------------------------------------------------------
// Spec-level data types.

struct GlobalEmbeddingTable {
    int dim = 128;
    std::map<std::string, std::vector<double>> embeddings;
};

struct CodebookSet {
    int num_codebooks = 5;  // M
    int codes_per_book = 6; // m
    int code_dim = 128;     // D
    std::vector<double> codes;  // [M, m, D]

    double* book(int j) { return codes.data() + static_cast<std::size_t>(j) * codes_per_book * code_dim; }
    const double* book(int j) const {
        return codes.data() + static_cast<std::size_t>(j) * codes_per_book * code_dim;
    }
};

struct AttentionTable {
    int num_codebooks = 5;
    int codes_per_book = 6;
    std::map<std::string, std::vector<double>> logits;  // class -> [M, m] raw weights
};

struct CBNBank {
    // (class_id, layer_id) -> affine rows
    std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>>
        params;
};

// ---------------------------------------------------------------------------
// Composition primitives. The low-level overloads operate on raw spans and are
// shared with the model's training path; the struct overloads are convenience
// wrappers over them.

// out[D] = sum_j sum_k sparsemax(logits_j)_k * codes[j,k,:]; skip_book < 0
// composes everything, otherwise codebook skip_book is knocked out.
void compose_codes(const double* codes, int M, int m, int D, const double* logits, double* out,
                   int skip_book = -1);

// Backward of compose_codes: accumulates into dcodes/dlogits (either may be null).
void compose_codes_backward(const double* codes, int M, int m, int D, const double* logits,
                            const double* dout, double* dcodes, double* dlogits,
                            int skip_book = -1);

std::vector<double> compose_gce(const GlobalEmbeddingTable& table, const std::string& class_id);
std::vector<double> compose_cgce(const CodebookSet& codes, const AttentionTable& attn,
                                 const std::string& class_id);
std::vector<double> knockout_codebook(const CodebookSet& codes, const AttentionTable& attn,
                                      const std::string& class_id, int book);

// Per-layer CAB modulation: the attended code combination split into
// (gamma, beta) halves. code_dim of the layer's codebook must be 2*channels.
std::pair<std::vector<double>, std::vector<double>> cab_modulation(const CodebookSet& codes,
                                                                   const AttentionTable& attn,
                                                                   const std::string& class_id);

// Voxelwise mean occupancy over the support shapes.
OccupancyField wallace_prior(const std::vector<VoxelGrid>& shapes);

std::pair<std::vector<double>, std::vector<double>> mcce_params(const CBNBank& bank,
                                                                const std::string& class_id,
                                                                const std::string& layer_id);

}  // namespace fewrec

#endif
