#pragma once

#include <string>
#include <vector>

#include "warp4d/camera.hpp"
#include "warp4d/tensor.hpp"

namespace warp4d {

// Camera record: JSON object with fields fx, fy, cx, cy, R (9 row-major
// reals), T (3 reals). Skew is not representable in this record and valid
// cameras written by the toolkit never carry it.
void save_camera_json(const std::string& path, const Camera& cam);
Camera load_camera_json(const std::string& path);

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

// Checkpoint container: one line of JSON listing tensor names and shapes
// in order, a newline, then the concatenated payloads as IEEE-754 32-bit
// little-endian floats.
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace warp4d
