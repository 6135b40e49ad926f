// Walks one synthetic 2x2-tile trace through scoring, budgeting, selection
// and the cost model at a 20% retention ratio.

#include <iostream>

#include "hero/hero.hpp"

int main() {
    hero::SynthSpec spec;
    spec.seed = 7;
    spec.K = 4;
    spec.planted_primary = {{100, 101, 124, 125}, {300, 301}, {10}, {575, 574, 573}};
    spec.planted_shortcut = {0, 23, 552};
    spec.noise_scale = 0.5;
    const auto trace = hero::generate(spec);

    const auto scores = hero::score_tiles(trace);
    const auto alloc = hero::allocate(trace.K(), trace.N, 0.2, scores.s);
    const auto masks = hero::select_all(trace, alloc, hero::default_tile_layers(), hero::LayerSet::range(13, 24));

    std::cout << "image " << trace.image_id << ": " << trace.grid_rows << "x" << trace.grid_cols << " tiles, N="
              << trace.N << "\n";
    std::cout << "budget " << alloc.N_total << " tokens (thumbnail " << alloc.N_global << ", tiles";
    for (auto q : alloc.per_tile) std::cout << ' ' << q;
    std::cout << ")\n";
    for (std::size_t i = 0; i < trace.K(); ++i) {
        std::cout << "tile " << i << " s=" << scores.s[i] << " first kept:";
        for (std::size_t j = 0; j < std::min<std::size_t>(4, masks[i].kept_indices.size()); ++j) {
            std::cout << ' ' << masks[i].kept_indices[j];
        }
        std::cout << '\n';
    }

    const auto profile = hero::vicuna_7b();
    const auto full = hero::prefill_flops((trace.K() + 1) * trace.N, 0, profile);
    const auto pruned = hero::pruned_flops(alloc, 0, profile);
    std::cout << "prefill " << full.tflops << " -> " << pruned.tflops << " TFLOPs, KV cache " << full.kv_cache_mib
              << " -> " << pruned.kv_cache_mib << " MiB\n";
}
