#pragma once

#include "svs/classifier.hpp"
#include "svs/common.hpp"

#include <string>
#include <vector>

namespace svs {

// Minimal 8-bit RGB PNG writer (stored deflate blocks, no external codec).
void write_png(const std::string& path, const std::vector<unsigned char>& rgb, Index width,
               Index height);

// Mel heatmap: time on x, bin 0 at the bottom, [0,1] mapped to a dark-to-warm
// gradient.
void save_mel_image(const std::string& path, const Matf& mel, int pixels_per_frame = 1);

// Reference above, synthesis below, aligned time axes.
void save_mel_pair_image(const std::string& path, const Matf& reference, const Matf& synthesized,
                         int pixels_per_frame = 1);

// Phoneme-probability heatmap (one row band per symbol) with the
// over-threshold runs outlined.
void save_alignment_image(const std::string& path, const Matf& probs,
                          const std::vector<AlignSegment>& segments, int pixels_per_frame = 2,
                          int band_height = 14);

}  // namespace svs
