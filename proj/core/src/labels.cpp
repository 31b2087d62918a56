/* Copyright 2026 The CCDA Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "ccda/labels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ccda/datagen.hpp"

namespace ccda {

namespace {

void check_grid(const Tensor& t, const PatchGrid& grid, const char* who) {
  if (t.dim(0) != grid.rows * grid.patch_height || t.dim(1) != grid.cols * grid.patch_width) {
    throw std::invalid_argument(std::string(who) + ": grid " + std::to_string(grid.rows) + "x" +
                                std::to_string(grid.cols) + " of " +
                                std::to_string(grid.patch_height) + "x" +
                                std::to_string(grid.patch_width) +
                                " patches does not tile input " + t.shape_str());
  }
}

int label_at(const Tensor& labels, int i, int j) {
  const double v = labels.at(i, j);
  if (v != std::floor(v) || v < 0.0) {
    throw std::invalid_argument("label map contains a non-integer or negative value");
  }
  return static_cast<int>(v);
}

}  // namespace

PatchGrid make_patch_grid(int image_height, int image_width, int patch_height, int patch_width) {
  if (patch_height < 1 || patch_width < 1 || image_height % patch_height != 0 ||
      image_width % patch_width != 0) {
    throw std::invalid_argument("make_patch_grid: patches must tile the image exactly");
  }
  return PatchGrid{patch_height, patch_width, image_height / patch_height,
                   image_width / patch_width};
}

Tensor coarse_labels_from_truth(const Tensor& labels, const PatchGrid& grid, int num_classes) {
  if (labels.rank() != 2) throw std::invalid_argument("coarse_labels_from_truth: HxW map expected");
  check_grid(labels, grid, "coarse_labels_from_truth");
  Tensor presence({grid.rows, grid.cols, num_classes});
  for (int i = 0; i < labels.dim(0); ++i) {
    for (int j = 0; j < labels.dim(1); ++j) {
      const int cls = label_at(labels, i, j);
      if (cls == kIgnoreLabel) continue;
      if (cls >= num_classes) {
        throw std::invalid_argument("coarse_labels_from_truth: class " + std::to_string(cls) +
                                    " out of range");
      }
      presence.at(i / grid.patch_height, j / grid.patch_width, cls) = 1.0;
    }
  }
  return presence;
}

Tensor coarse_labels_from_prediction(const Tensor& probs, const PatchGrid& grid, double th_w) {
  validate_probs(probs, 1e-5);
  if (!(th_w > 0.0 && th_w < 1.0)) {
    throw std::invalid_argument("coarse_labels_from_prediction: th_w must lie in (0,1)");
  }
  check_grid(probs, grid, "coarse_labels_from_prediction");
  const int c = probs.dim(2);
  Tensor presence({grid.rows, grid.cols, c});
  for (int i = 0; i < probs.dim(0); ++i) {
    for (int j = 0; j < probs.dim(1); ++j) {
      for (int k = 0; k < c; ++k) {
        if (probs.at(i, j, k) > th_w) {
          presence.at(i / grid.patch_height, j / grid.patch_width, k) = 1.0;
        }
      }
    }
  }
  return presence;
}

Tensor pseudo_labels(const Tensor& probs) {
  validate_probs(probs);
  const int h = probs.dim(0), w = probs.dim(1), c = probs.dim(2);
  Tensor labels({h, w});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      int best = 0;
      double best_p = probs.at(i, j, 0);
      for (int k = 1; k < c; ++k) {
        if (probs.at(i, j, k) > best_p) {
          best_p = probs.at(i, j, k);
          best = k;
        }
      }
      labels.at(i, j) = static_cast<double>(best);
    }
  }
  return labels;
}

Tensor uncertainty_mask(const Tensor& probs, double th_n) {
  validate_probs(probs);
  if (!(th_n > 0.0 && th_n <= 1.0)) {
    throw std::invalid_argument("uncertainty_mask: th_n must lie in (0,1]");
  }
  const int h = probs.dim(0), w = probs.dim(1), c = probs.dim(2);
  Tensor mask({h, w});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double best = probs.at(i, j, 0);
      for (int k = 1; k < c; ++k) best = std::max(best, probs.at(i, j, k));
      mask.at(i, j) = best < th_n ? 1.0 : 0.0;
    }
  }
  return mask;
}

Tensor one_hot(const Tensor& labels, int num_classes) {
  if (labels.rank() != 2) throw std::invalid_argument("one_hot: HxW map expected");
  const int h = labels.dim(0), w = labels.dim(1);
  Tensor out({h, w, num_classes});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const int cls = label_at(labels, i, j);
      if (cls == kIgnoreLabel) continue;
      if (cls >= num_classes) {
        throw std::invalid_argument("one_hot: class " + std::to_string(cls) + " out of range");
      }
      out.at(i, j, cls) = 1.0;
    }
  }
  return out;
}

void validate_probs(const Tensor& probs, double tol) {
  if (probs.rank() != 3 || probs.dim(2) < 2) {
    throw std::invalid_argument("probability map must be HxWxC with C >= 2, got " +
                                probs.shape_str());
  }
  const int h = probs.dim(0), w = probs.dim(1), c = probs.dim(2);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double row = 0.0;
      for (int k = 0; k < c; ++k) {
        const double p = probs.at(i, j, k);
        if (!std::isfinite(p) || p < -tol || p > 1.0 + tol) {
          throw std::invalid_argument("probability entry out of range at pixel (" +
                                      std::to_string(i) + "," + std::to_string(j) + ")");
        }
        row += p;
      }
      if (std::fabs(row - 1.0) > tol * c) {
        throw std::invalid_argument("probability row does not sum to 1 at pixel (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
}

}  // namespace ccda
