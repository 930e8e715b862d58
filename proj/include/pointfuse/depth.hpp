#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pointfuse/geometry.hpp"
#include "pointfuse/image.hpp"

namespace pointfuse {

// Gap-free depth grid, row-major depth[v*width + u].
struct DenseDepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  double at(int u, int v) const { return depth[static_cast<size_t>(v) * width + u]; }
  double& at(int u, int v) { return depth[static_cast<size_t>(v) * width + u]; }
};

// Fills a sparse map into a dense one. The rgb image rides along so
// guidance-aware strategies can plug in; the default completer ignores it.
class DepthCompleter {
 public:
  virtual ~DepthCompleter() = default;
  virtual DenseDepthMap complete(const RgbImage& image, const SparseDepthMap& sparse) const = 0;
  // Learned completers contribute a depth supervision term; the classical one
  // reports false and the pipeline pins that loss term to zero.
  virtual bool learned() const { return false; }
};

// Deterministic classical completion:
//   1) synchronous dilation passes with a 5x5 min kernel (valid cells are
//      never overwritten) until the map is full or a pass fills nothing;
//   2) any remaining empty cell copies its nearest valid source cell
//      (Euclidean; ties by row-major source order, v then u).
// Valid input cells pass through bit-identical.
class MorphologicalCompleter : public DepthCompleter {
 public:
  DenseDepthMap complete(const RgbImage& image, const SparseDepthMap& sparse) const override;
};

// Runs the default MorphologicalCompleter. Throws std::domain_error when the
// sparse map has no valid cell.
DenseDepthMap complete_depth(const RgbImage& image, const SparseDepthMap& sparse);

// Mean absolute error over cells where mask is nonzero (mask is row-major,
// one byte per cell). Throws std::domain_error on an all-zero mask.
double depth_loss(const DenseDepthMap& predicted, const DenseDepthMap& reference,
                  const std::vector<uint8_t>& valid_mask);

// Raw binary grid: 16-byte header (magic "PFDM", u32 width, u32 height,
// f32 sentinel for empty cells) then width*height little-endian f32 values,
// row-major. Dense maps use the same container and simply contain no sentinel.
void save_depth(const SparseDepthMap& map, const std::string& path);
void save_depth(const DenseDepthMap& map, const std::string& path);
SparseDepthMap load_sparse_depth(const std::string& path);
DenseDepthMap load_dense_depth(const std::string& path);

// ASCII PGM (P2) debug dump; depths scale linearly into 0..65535, empty -> 0.
void save_depth_pgm(const SparseDepthMap& map, const std::string& path);

}  // namespace pointfuse
