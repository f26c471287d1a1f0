#include "fewrec/priors.hpp"

#include <algorithm>

#include "fewrec/sparsemax.hpp"

namespace fewrec {

PriorKind prior_kind_from_string(const std::string& s) {
    if (s == "zs") return PriorKind::zs;
    if (s == "as") return PriorKind::as_;
    if (s == "wallace") return PriorKind::wallace_avg;
    if (s == "gce") return PriorKind::gce;
    if (s == "cgce") return PriorKind::cgce;
    if (s == "mcce-enc") return PriorKind::mcce_enc;
    if (s == "mcce-dec") return PriorKind::mcce_dec;
    if (s == "mcce-full") return PriorKind::mcce_full;
    if (s == "cab-enc") return PriorKind::cab_enc;
    if (s == "cab-dec") return PriorKind::cab_dec;
    if (s == "cab-full") return PriorKind::cab_full;
    if (s == "hybrid") return PriorKind::hybrid;
    throw ConfigError("unknown prior variant '" + s + "'");
}

std::string to_string(PriorKind kind) {
    switch (kind) {
        case PriorKind::zs: return "zs";
        case PriorKind::as_: return "as";
        case PriorKind::wallace_avg: return "wallace";
        case PriorKind::gce: return "gce";
        case PriorKind::cgce: return "cgce";
        case PriorKind::mcce_enc: return "mcce-enc";
        case PriorKind::mcce_dec: return "mcce-dec";
        case PriorKind::mcce_full: return "mcce-full";
        case PriorKind::cab_enc: return "cab-enc";
        case PriorKind::cab_dec: return "cab-dec";
        case PriorKind::cab_full: return "cab-full";
        case PriorKind::hybrid: return "hybrid";
    }
    throw ConfigError("unhandled prior kind");
}

bool kind_has_class_params(PriorKind kind) {
    return kind != PriorKind::zs && kind != PriorKind::as_ && kind != PriorKind::wallace_avg;
}

bool kind_concatenates_prior(PriorKind kind) {
    return kind == PriorKind::gce || kind == PriorKind::cgce;
}

bool kind_uses_cbn_encoder(PriorKind kind) {
    return kind == PriorKind::mcce_enc || kind == PriorKind::mcce_full;
}

bool kind_uses_cbn_decoder(PriorKind kind) {
    return kind == PriorKind::mcce_dec || kind == PriorKind::mcce_full ||
           kind == PriorKind::hybrid;
}

bool kind_uses_cab_encoder(PriorKind kind) {
    return kind == PriorKind::cab_enc || kind == PriorKind::cab_full ||
           kind == PriorKind::hybrid;
}

bool kind_uses_cab_decoder(PriorKind kind) {
    return kind == PriorKind::cab_dec || kind == PriorKind::cab_full;
}

void compose_codes(const double* codes, int M, int m, int D, const double* logits, double* out,
                   int skip_book) {
    std::fill(out, out + D, 0.0);
    for (int j = 0; j < M; ++j) {
        if (j == skip_book) continue;
        std::vector<double> w(logits + static_cast<std::size_t>(j) * m,
                              logits + static_cast<std::size_t>(j + 1) * m);
        std::vector<double> a = sparsemax(w);
        const double* book = codes + static_cast<std::size_t>(j) * m * D;
        for (int k = 0; k < m; ++k) {
            if (a[static_cast<std::size_t>(k)] == 0.0) continue;
            double ak = a[static_cast<std::size_t>(k)];
            const double* code = book + static_cast<std::size_t>(k) * D;
            for (int d = 0; d < D; ++d) out[d] += ak * code[d];
        }
    }
}

void compose_codes_backward(const double* codes, int M, int m, int D, const double* logits,
                            const double* dout, double* dcodes, double* dlogits, int skip_book) {
    for (int j = 0; j < M; ++j) {
        if (j == skip_book) continue;
        std::vector<double> w(logits + static_cast<std::size_t>(j) * m,
                              logits + static_cast<std::size_t>(j + 1) * m);
        std::vector<double> a = sparsemax(w);
        const double* book = codes + static_cast<std::size_t>(j) * m * D;
        if (dcodes) {
            double* dbook = dcodes + static_cast<std::size_t>(j) * m * D;
            for (int k = 0; k < m; ++k) {
                double ak = a[static_cast<std::size_t>(k)];
                if (ak == 0.0) continue;
                double* dcode = dbook + static_cast<std::size_t>(k) * D;
                for (int d = 0; d < D; ++d) dcode[d] += ak * dout[d];
            }
        }
        if (dlogits) {
            std::vector<double> da(static_cast<std::size_t>(m), 0.0);
            for (int k = 0; k < m; ++k) {
                const double* code = book + static_cast<std::size_t>(k) * D;
                double s = 0.0;
                for (int d = 0; d < D; ++d) s += dout[d] * code[d];
                da[static_cast<std::size_t>(k)] = s;
            }
            std::vector<double> dw = sparsemax_jvp(w, da);
            double* dl = dlogits + static_cast<std::size_t>(j) * m;
            for (int k = 0; k < m; ++k) dl[k] += dw[static_cast<std::size_t>(k)];
        }
    }
}

std::vector<double> compose_gce(const GlobalEmbeddingTable& table, const std::string& class_id) {
    auto it = table.embeddings.find(class_id);
    if (it == table.embeddings.end()) {
        throw ConfigError("compose_gce: unknown class '" + class_id + "'");
    }
    return it->second;
}

namespace {
const std::vector<double>& attn_row(const AttentionTable& attn, const std::string& class_id) {
    auto it = attn.logits.find(class_id);
    if (it == attn.logits.end()) {
        throw ConfigError("attention table has no row for class '" + class_id + "'");
    }
    return it->second;
}
}  // namespace

std::vector<double> compose_cgce(const CodebookSet& codes, const AttentionTable& attn,
                                 const std::string& class_id) {
    const auto& logits = attn_row(attn, class_id);
    std::vector<double> out(static_cast<std::size_t>(codes.code_dim));
    compose_codes(codes.codes.data(), codes.num_codebooks, codes.codes_per_book, codes.code_dim,
                  logits.data(), out.data());
    return out;
}

std::vector<double> knockout_codebook(const CodebookSet& codes, const AttentionTable& attn,
                                      const std::string& class_id, int book) {
    if (book < 0 || book >= codes.num_codebooks) {
        throw ConfigError("knockout_codebook: codebook index " + std::to_string(book) +
                          " out of range [0, " + std::to_string(codes.num_codebooks) + ")");
    }
    const auto& logits = attn_row(attn, class_id);
    std::vector<double> out(static_cast<std::size_t>(codes.code_dim));
    compose_codes(codes.codes.data(), codes.num_codebooks, codes.codes_per_book, codes.code_dim,
                  logits.data(), out.data(), book);
    return out;
}

std::pair<std::vector<double>, std::vector<double>> cab_modulation(const CodebookSet& codes,
                                                                   const AttentionTable& attn,
                                                                   const std::string& class_id) {
    if (codes.code_dim % 2 != 0) {
        throw ConfigError("cab_modulation: code dimension must be 2*channels");
    }
    std::vector<double> combined = compose_cgce(codes, attn, class_id);
    int half = codes.code_dim / 2;
    std::vector<double> gamma(combined.begin(), combined.begin() + half);
    std::vector<double> beta(combined.begin() + half, combined.end());
    return {std::move(gamma), std::move(beta)};
}

OccupancyField wallace_prior(const std::vector<VoxelGrid>& shapes) {
    if (shapes.empty()) {
        throw ConfigError("wallace_prior: no support shapes");
    }
    int r = shapes.front().resolution();
    OccupancyField prior(r);
    for (const auto& s : shapes) {
        if (s.resolution() != r) {
            throw DataError("wallace_prior: resolution mismatch");
        }
        for (std::size_t i = 0; i < prior.size(); ++i) {
            prior.probabilities()[i] += s.occupancy()[i];
        }
    }
    double inv = 1.0 / static_cast<double>(shapes.size());
    for (auto& p : prior.probabilities()) p *= inv;
    return prior;
}

std::pair<std::vector<double>, std::vector<double>> mcce_params(const CBNBank& bank,
                                                                const std::string& class_id,
                                                                const std::string& layer_id) {
    auto it = bank.params.find({class_id, layer_id});
    if (it == bank.params.end()) {
        throw ConfigError("mcce_params: no row for (" + class_id + ", " + layer_id + ")");
    }
    return it->second;
}

}  // namespace fewrec
