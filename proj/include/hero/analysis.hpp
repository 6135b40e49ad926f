#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hero/error.hpp"
#include "hero/selection.hpp"
#include "hero/tensor.hpp"
#include "hero/tiling.hpp"
#include "hero/trace.hpp"

namespace hero {

/// Mean pairwise cosine similarity between CLS-attention rows of different
/// layers. Indices passed to at() are 0-based.
struct LayerSimilarityMatrix {
    std::size_t num_layers = 0;
    std::vector<double> sims;  // row-major [num_layers, num_layers]
    std::size_t regions = 0;   // how many region traces were averaged

    [[nodiscard]] double at(std::size_t p, std::size_t q) const { return sims[p * num_layers + q]; }
};

enum class RegionSelector { Thumbnail, Tiles, All };

/// Running sums for layer_similarity. Merging partial accumulators in a fixed
/// order gives the same matrix as a single pass in that order.
class LayerSimilarityAccumulator {
public:
    explicit LayerSimilarityAccumulator(std::size_t num_layers)
        : m_layers(num_layers), m_sums(num_layers * num_layers, 0.0) {}

    void add(const RegionTrace& region, const std::string& name = "region") {
        if (region.num_layers() != m_layers) {
            throw Error(Errc::DimensionMismatch, name + ": expected " + std::to_string(m_layers) + " layers");
        }
        for (std::size_t p = 0; p < m_layers; ++p) {
            if (!(l2_norm(region.cls_attn.row(p)) > 0.0)) {
                throw Error(Errc::ZeroNorm, name + "/cls_attn: all-zero attention row in layer " + std::to_string(p + 1));
            }
        }
        for (std::size_t p = 0; p < m_layers; ++p) {
            for (std::size_t q = p; q < m_layers; ++q) {
                m_sums[p * m_layers + q] += cosine_similarity(region.cls_attn.row(p), region.cls_attn.row(q));
            }
        }
        ++m_count;
    }

    void add(const ImageTrace& trace, RegionSelector which) {
        if (which != RegionSelector::Thumbnail) {
            for (std::size_t i = 0; i < trace.tiles.size(); ++i) {
                add(trace.tiles[i], trace.image_id + ":tile/" + std::to_string(i));
            }
        }
        if (which != RegionSelector::Tiles) add(trace.thumbnail, trace.image_id + ":global");
    }

    void merge(const LayerSimilarityAccumulator& other) {
        if (other.m_layers != m_layers) throw Error(Errc::DimensionMismatch, "merging accumulators of different depth");
        for (std::size_t i = 0; i < m_sums.size(); ++i) m_sums[i] += other.m_sums[i];
        m_count += other.m_count;
    }

    [[nodiscard]] LayerSimilarityMatrix finish() const {
        if (m_count == 0) throw Error(Errc::EmptyCorpus, "no regions to average");
        LayerSimilarityMatrix out{m_layers, std::vector<double>(m_layers * m_layers), m_count};
        for (std::size_t p = 0; p < m_layers; ++p) {
            for (std::size_t q = p; q < m_layers; ++q) {
                const double v = p == q ? 1.0 : m_sums[p * m_layers + q] / static_cast<double>(m_count);
                out.sims[p * m_layers + q] = out.sims[q * m_layers + p] = v;
            }
        }
        return out;
    }

private:
    std::size_t m_layers;
    std::vector<double> m_sums;  // upper triangle used
    std::size_t m_count = 0;
};

inline LayerSimilarityMatrix layer_similarity(std::span<const ImageTrace> traces,
                                              RegionSelector which = RegionSelector::Thumbnail) {
    if (traces.empty()) throw Error(Errc::EmptyCorpus, "layer_similarity: empty corpus");
    LayerSimilarityAccumulator acc(traces.front().num_layers);
    for (const auto& t : traces) {
        if (t.num_layers != traces.front().num_layers) {
            throw Error(Errc::DimensionMismatch, t.image_id + ": encoder depth differs from the rest of the corpus");
        }
        acc.add(t, which);
    }
    return acc.finish();
}

/// Score of splitting layers into {1..b} and {b+1..L}: pooled mean of
/// within-block entries (diagonal included) minus mean of cross-block entries.
inline double stage_split_score(const LayerSimilarityMatrix& m, std::size_t b) {
    double within = 0.0, cross = 0.0;
    std::size_t n_within = 0, n_cross = 0;
    for (std::size_t p = 0; p < m.num_layers; ++p) {
        for (std::size_t q = 0; q < m.num_layers; ++q) {
            if ((p < b) == (q < b)) {
                within += m.at(p, q);
                ++n_within;
            } else {
                cross += m.at(p, q);
                ++n_cross;
            }
        }
    }
    return within / static_cast<double>(n_within) - cross / static_cast<double>(n_cross);
}

/// Last layer (1-based) of the first stage: the contiguous two-block split that
/// best separates the matrix. Ties resolve to the smallest boundary.
inline std::size_t detect_stages(const LayerSimilarityMatrix& m) {
    if (m.num_layers < 2) throw Error(Errc::InvalidConfig, "detect_stages needs at least two layers");
    std::size_t best = 1;
    double best_score = stage_split_score(m, 1);
    for (std::size_t b = 2; b < m.num_layers; ++b) {
        const double s = stage_split_score(m, b);
        if (s > best_score + 1e-12) {
            best = b;
            best_score = s;
        }
    }
    return best;
}

/// Binary salient-object mask over source-image pixels.
struct SaliencyMask {
    std::string image_id;
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> bitmap;  // row-major, 1 = salient

    [[nodiscard]] bool at(std::size_t x, std::size_t y) const { return bitmap[y * width + x] != 0; }
};

/// Reads an 8-bit PGM (P5 binary or P2 plain); any nonzero pixel is salient.
inline SaliencyMask read_pgm(std::istream& in, std::string image_id = {}) {
    auto skip_ws = [&] {
        for (;;) {
            const int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (c != EOF && std::isspace(c)) {
                in.get();
            } else {
                return;
            }
        }
    };
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P2") throw Error(Errc::BadMagic, "not a PGM file");
    std::size_t w = 0, h = 0, maxval = 0;
    skip_ws();
    in >> w;
    skip_ws();
    in >> h;
    skip_ws();
    in >> maxval;
    if (!in || w == 0 || h == 0 || maxval == 0 || maxval > 255) {
        throw Error(Errc::CorruptHeader, "PGM header must describe a non-empty 8-bit image");
    }
    SaliencyMask mask{std::move(image_id), w, h, std::vector<std::uint8_t>(w * h)};
    if (magic == "P5") {
        in.get();  // single whitespace byte after maxval
        std::vector<char> raw(w * h);
        in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw Error(Errc::CorruptHeader, "PGM payload truncated");
        for (std::size_t i = 0; i < raw.size(); ++i) mask.bitmap[i] = raw[i] != 0 ? 1 : 0;
    } else {
        for (std::size_t i = 0; i < w * h; ++i) {
            unsigned v = 0;
            if (!(in >> v)) throw Error(Errc::CorruptHeader, "PGM payload truncated");
            mask.bitmap[i] = v != 0 ? 1 : 0;
        }
    }
    return mask;
}

inline SaliencyMask read_pgm_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    return read_pgm(in, path.stem().string());
}

inline void write_pgm(std::ostream& out, const SaliencyMask& mask) {
    out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
    for (auto v : mask.bitmap) out.put(static_cast<char>(v ? 255 : 0));
}

/// Per-patch salience for tile `tile_index` of `plan`: a patch is salient when
/// more than half of the source pixels whose centres fall inside it are set.
inline std::vector<bool> salient_patches(const TilingPlan& plan, const SaliencyMask& mask, std::size_t tile_index = 0) {
    if (plan.image_w != mask.width || plan.image_h != mask.height) {
        throw Error(Errc::DimensionMismatch, "mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                                                 " does not match plan image " + std::to_string(plan.image_w) + "x" +
                                                 std::to_string(plan.image_h));
    }
    const auto first_center = [](double lo) {
        return static_cast<std::size_t>(std::max(0.0, std::ceil(lo - 0.5)));
    };
    std::vector<bool> out(plan.patches_per_tile(), false);
    for (std::size_t p = 0; p < out.size(); ++p) {
        const auto r = map_patch_to_image(plan, tile_index, p);
        if (r.empty()) continue;
        const std::size_t xa = first_center(r.x0), xb = std::min(first_center(r.x1), mask.width);
        const std::size_t ya = first_center(r.y0), yb = std::min(first_center(r.y1), mask.height);
        std::size_t total = 0, hit = 0;
        for (std::size_t y = ya; y < yb; ++y) {
            for (std::size_t x = xa; x < xb; ++x) {
                ++total;
                hit += mask.at(x, y) ? 1 : 0;
            }
        }
        out[p] = total > 0 && 2 * hit > total;
    }
    return out;
}

/// |a ∩ b| / |a ∪ b|. Two empty sets are identical and score 1.
inline double set_iou(const std::vector<bool>& a, const std::vector<bool>& b) {
    if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "set_iou: lengths differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += (a[i] && b[i]) ? 1 : 0;
        uni += (a[i] || b[i]) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// IoU between the thumbnail's top-k CLS-attended patches at `layer` (1-based)
/// and the mask's salient patches. `plan` must be the thumbnail geometry.
inline double saliency_iou(const ImageTrace& trace, const TilingPlan& plan, const SaliencyMask& mask, std::size_t layer,
                           std::size_t k) {
    if (plan.num_tiles() != 1) throw Error(Errc::DimensionMismatch, "saliency_iou expects a single-region plan");
    if (trace.N != plan.patches_per_tile()) {
        throw Error(Errc::DimensionMismatch, trace.image_id + ": N=" + std::to_string(trace.N) + " but plan has " +
                                                 std::to_string(plan.patches_per_tile()) + " patches");
    }
    if (layer == 0 || layer > trace.num_layers) {
        throw Error(Errc::LayerOutOfRange, "layer " + std::to_string(layer) + " out of range");
    }
    const auto row = trace.thumbnail.cls_attn.row(layer - 1);
    const std::vector<double> scores(row.begin(), row.end());
    const auto top = select_topk(scores, k);
    return set_iou(top.keep, salient_patches(plan, mask));
}

inline void write_similarity_csv(std::ostream& out, const LayerSimilarityMatrix& m) {
    out << "layer_p,layer_q,value\n" << std::setprecision(9);
    for (std::size_t p = 0; p < m.num_layers; ++p) {
        for (std::size_t q = 0; q < m.num_layers; ++q) out << p + 1 << ',' << q + 1 << ',' << m.at(p, q) << '\n';
    }
}

/// `mean_iou[l]` belongs to layer l+1.
inline void write_iou_csv(std::ostream& out, std::span<const double> mean_iou) {
    out << "layer,mean_iou\n" << std::setprecision(9);
    for (std::size_t l = 0; l < mean_iou.size(); ++l) out << l + 1 << ',' << mean_iou[l] << '\n';
}

}  // namespace hero
