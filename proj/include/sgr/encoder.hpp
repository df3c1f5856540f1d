#pragma once

#include <array>
#include <vector>

#include "sgr/graph.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

constexpr int64_t kStemSpectralExtent = 15;
constexpr int64_t kResidualPathCount = 4;
constexpr std::array<int64_t, kResidualPathCount> kResidualSpectralExtents{3, 5, 7, 9};
constexpr int kResidualDilation = 2;

/// Stem convolution: spectral-valid, spatial-same, undilated. Maps
/// 1 x B x H x W to F x (B-14) x H x W.
template <typename T>
NodeId encoder_stem(Graph<T>& record, NodeId input, NodeId stem_kernel) {
  Conv3dSpec spec;
  spec.pad = {PadMode::valid, PadMode::same, PadMode::same};
  spec.dilation = {1, 1, 1};
  return record.conv3d(input, stem_kernel, spec);
}

/// Pre-activation multi-path residual module. Each path rectifies the input,
/// applies a spectrally dilated shape-preserving convolution emitting F/4
/// channels, and the concatenated paths are added to the identity shortcut.
/// All-zero path kernels therefore make the module an exact identity.
template <typename T>
NodeId residual_module(Graph<T>& record, NodeId input,
                       const std::array<NodeId, kResidualPathCount>& path_kernels) {
  Conv3dSpec spec;
  spec.pad = {PadMode::same, PadMode::same, PadMode::same};
  spec.dilation = {kResidualDilation, 1, 1};
  const NodeId active = record.relu(input);
  std::vector<NodeId> paths;
  paths.reserve(kResidualPathCount);
  for (const NodeId kernel : path_kernels)
    paths.push_back(record.conv3d(active, kernel, spec));
  return record.add(input, record.concat(paths));
}

/// Full encoder: stem followed by two residual modules. Output shape
/// F x S' x H x W with S' = B - 14.
template <typename T>
NodeId encode(Graph<T>& record, NodeId input, NodeId stem_kernel,
              const std::array<std::array<NodeId, kResidualPathCount>, 2>& residual_kernels) {
  NodeId x = encoder_stem(record, input, stem_kernel);
  for (const auto& module_kernels : residual_kernels)
    x = residual_module(record, x, module_kernels);
  return x;
}

}  // namespace sgr
