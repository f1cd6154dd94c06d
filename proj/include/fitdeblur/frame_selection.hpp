#pragma once

// Sharp-frame selection by the variance of the image Laplacian.

#include <compare>
#include <cstdio>
#include <ostream>
#include <span>
#include <vector>

#include "fitdeblur/error.hpp"
#include "fitdeblur/image.hpp"

namespace fitdeblur {

struct SharpnessScore {
  double value = 0.0;
  auto operator<=>(const SharpnessScore&) const = default;
};

struct SelectionResult {
  std::vector<int> indices;  // one per window, strictly increasing
  int window = 20;
};

struct SharpnessRow {
  int frame = 0;
  double score = 0.0;
  bool selected = false;
};

// Valid-region convolution with the 4-neighbour mask [[0,1,0],[1,-4,1],[0,1,0]].
inline Grid<double> laplacian(const Grid<double>& image) {
  require(image.rows >= 3 && image.cols >= 3, ErrorKind::degenerate_input,
          "laplacian needs at least a 3x3 image");
  Grid<double> out(image.rows - 2, image.cols - 2);
  for (int r = 1; r + 1 < image.rows; ++r)
    for (int c = 1; c + 1 < image.cols; ++c)
      out(r - 1, c - 1) = image(r - 1, c) + image(r + 1, c) + image(r, c - 1) + image(r, c + 1) - 4.0 * image(r, c);
  return out;
}

// Sum (not mean) of squared deviations of the luminance Laplacian.
inline SharpnessScore sharpness_score(const Grid<double>& luminance) {
  const Grid<double> lap = laplacian(luminance);
  double mean = 0.0;
  for (double v : lap.data) mean += v;
  mean /= static_cast<double>(lap.data.size());
  double acc = 0.0;
  for (double v : lap.data) acc += (v - mean) * (v - mean);
  return {acc};
}

inline SharpnessScore sharpness_score(const Frame& frame) { return sharpness_score(to_luminance(frame)); }

inline SelectionResult select_from_scores(std::span<const double> scores, int window) {
  require(!scores.empty(), ErrorKind::empty_input, "cannot select frames from an empty video");
  require(window >= 1, ErrorKind::parameter, "selection window must be >= 1");
  SelectionResult result;
  result.window = window;
  const int n = static_cast<int>(scores.size());
  for (int begin = 0; begin < n; begin += window) {
    const int end = std::min(n, begin + window);
    int best = begin;
    for (int i = begin + 1; i < end; ++i)
      if (scores[i] > scores[best]) best = i;  // strict: ties keep the earliest frame
    result.indices.push_back(best);
  }
  return result;
}

inline std::vector<double> score_frames(std::span<const Frame> video) {
  std::vector<double> scores;
  scores.reserve(video.size());
  for (const Frame& f : video) scores.push_back(sharpness_score(f).value);
  return scores;
}

inline SelectionResult select_sharp_frames(std::span<const Frame> video, int window = 20) {
  require(!video.empty(), ErrorKind::empty_input, "cannot select frames from an empty video");
  const std::vector<double> scores = score_frames(video);
  return select_from_scores(scores, window);
}

inline std::vector<SharpnessRow> sharpness_report(std::span<const Frame> video, int window = 20) {
  require(!video.empty(), ErrorKind::empty_input, "cannot score an empty video");
  const std::vector<double> scores = score_frames(video);
  const SelectionResult sel = select_from_scores(scores, window);
  std::vector<SharpnessRow> rows(video.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = {static_cast<int>(i), scores[i], false};
  for (int idx : sel.indices) rows[idx].selected = true;
  return rows;
}

inline void write_sharpness_csv(std::ostream& os, std::span<const SharpnessRow> rows) {
  os << "frame,score,selected\n";
  char buf[64];
  for (const SharpnessRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6g", r.score);
    os << r.frame << ',' << buf << ',' << (r.selected ? 1 : 0) << '\n';
  }
}

}  // namespace fitdeblur
