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
#ifndef CCDA_IMAGE_IO_HPP_
#define CCDA_IMAGE_IO_HPP_

#include <string>

#include "ccda/tensor.hpp"

namespace ccda {

// 8-bit PNG round trip. Images are HxWx3 tensors with values in [0,1] that
// are already quantized to the k/255 grid (the generator guarantees this),
// so write followed by read is pixel-exact. Label maps are HxW tensors whose
// entries are integer class indices in [0,255]; they ride in single-channel
// gray PNGs.

void write_png_rgb8(const std::string& path, const Tensor& image);
Tensor read_png_rgb8(const std::string& path);

void write_png_gray8(const std::string& path, const Tensor& map);
Tensor read_png_gray8(const std::string& path);

// snaps a [0,1] value onto the representable 8-bit grid
double quantize8(double v);

}  // namespace ccda

#endif  // CCDA_IMAGE_IO_HPP_
