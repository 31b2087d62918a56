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
#ifndef CCDA_LABELS_HPP_
#define CCDA_LABELS_HPP_

#include "ccda/tensor.hpp"

namespace ccda {

// Partition of an HxW image into equal rectangular patches; each patch
// corresponds to one spatial cell of the discriminator's coarse output.
struct PatchGrid {
  int patch_height = 0;
  int patch_width = 0;
  int rows = 0;
  int cols = 0;
};

// Requires the patch size to tile the image exactly.
PatchGrid make_patch_grid(int image_height, int image_width, int patch_height, int patch_width);

// Per-patch binary class presence from ground truth: presence[p][c] = 1 iff
// at least one pixel of class c falls inside patch p. Ignore pixels
// contribute nothing. Returns rows x cols x C with entries in {0,1}.
Tensor coarse_labels_from_truth(const Tensor& labels, const PatchGrid& grid, int num_classes);

// Per-patch presence from predictions: presence[p][c] = 1 iff some pixel in
// the patch has probability of class c strictly greater than th_w.
Tensor coarse_labels_from_prediction(const Tensor& probs, const PatchGrid& grid, double th_w);

// Per-pixel argmax class; ties break toward the smallest class index.
Tensor pseudo_labels(const Tensor& probs);

// Marks pixels whose maximum class probability is strictly below th_n.
Tensor uncertainty_mask(const Tensor& probs, double th_n);

// HxW class indices -> HxWxC one-hot rows; ignore pixels become all-zero.
Tensor one_hot(const Tensor& labels, int num_classes);

// Shared ProbMap validation: rank-3, entries finite, rows on the simplex
// within tol (loose enough for finite-difference probing).
void validate_probs(const Tensor& probs, double tol = 1e-3);

}  // namespace ccda

#endif  // CCDA_LABELS_HPP_
