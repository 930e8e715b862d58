#include "pointfuse/depth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "pointfuse/io_util.hpp"

namespace pointfuse {

DenseDepthMap MorphologicalCompleter::complete(const RgbImage& image,
                                               const SparseDepthMap& sparse) const {
  if (image.width != sparse.width || image.height != sparse.height)
    throw std::invalid_argument("complete: image and depth map sizes differ");
  if (sparse.valid_count < 1)
    throw std::domain_error("complete: no valid depth cells to extrapolate from");

  const int W = sparse.width, H = sparse.height;
  std::vector<double> cur = sparse.depth;
  int empties = static_cast<int>(cur.size()) - sparse.valid_count;

  // Synchronous 5x5 min-dilation: each pass reads the previous state only.
  while (empties > 0) {
    std::vector<double> next = cur;
    int filled = 0;
    for (int v = 0; v < H; ++v) {
      for (int u = 0; u < W; ++u) {
        if (cur[static_cast<size_t>(v) * W + u] != SparseDepthMap::kEmpty) continue;
        double best = std::numeric_limits<double>::infinity();
        for (int dv = -2; dv <= 2; ++dv) {
          const int vv = v + dv;
          if (vv < 0 || vv >= H) continue;
          for (int du = -2; du <= 2; ++du) {
            const int uu = u + du;
            if (uu < 0 || uu >= W) continue;
            const double d = cur[static_cast<size_t>(vv) * W + uu];
            if (d != SparseDepthMap::kEmpty && d < best) best = d;
          }
        }
        if (std::isfinite(best)) {
          next[static_cast<size_t>(v) * W + u] = best;
          ++filled;
        }
      }
    }
    cur.swap(next);
    empties -= filled;
    if (filled == 0) break;
  }

  // Safety net for any remainder: copy the nearest valid *input* cell.
  if (empties > 0) {
    for (int v = 0; v < H; ++v) {
      for (int u = 0; u < W; ++u) {
        if (cur[static_cast<size_t>(v) * W + u] != SparseDepthMap::kEmpty) continue;
        double best_d2 = std::numeric_limits<double>::infinity();
        double best_val = 0.0;
        for (int sv = 0; sv < H; ++sv) {
          for (int su = 0; su < W; ++su) {
            const double d = sparse.depth[static_cast<size_t>(sv) * W + su];
            if (d == SparseDepthMap::kEmpty) continue;
            const double d2 = static_cast<double>(su - u) * (su - u) +
                              static_cast<double>(sv - v) * (sv - v);
            if (d2 < best_d2) {  // strict: earlier row-major source wins ties
              best_d2 = d2;
              best_val = d;
            }
          }
        }
        cur[static_cast<size_t>(v) * W + u] = best_val;
      }
    }
  }

  DenseDepthMap out;
  out.width = W;
  out.height = H;
  out.depth = std::move(cur);
  return out;
}

DenseDepthMap complete_depth(const RgbImage& image, const SparseDepthMap& sparse) {
  return MorphologicalCompleter().complete(image, sparse);
}

double depth_loss(const DenseDepthMap& predicted, const DenseDepthMap& reference,
                  const std::vector<uint8_t>& valid_mask) {
  if (predicted.width != reference.width || predicted.height != reference.height)
    throw std::invalid_argument("depth_loss: map sizes differ");
  if (valid_mask.size() != predicted.depth.size())
    throw std::invalid_argument("depth_loss: mask size differs from map");
  double acc = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < valid_mask.size(); ++i) {
    if (!valid_mask[i]) continue;
    acc += std::abs(predicted.depth[i] - reference.depth[i]);
    ++n;
  }
  if (n == 0) throw std::domain_error("depth_loss: empty mask");
  return acc / static_cast<double>(n);
}

namespace {

constexpr char kDepthMagic[4] = {'P', 'F', 'D', 'M'};

void save_grid(const std::vector<double>& depth, int width, int height, const std::string& path) {
  std::ofstream out = open_out_binary(path);
  out.write(kDepthMagic, 4);
  write_u32(out, static_cast<uint32_t>(width));
  write_u32(out, static_cast<uint32_t>(height));
  write_f32(out, static_cast<float>(SparseDepthMap::kEmpty));
  for (double d : depth) write_f32(out, static_cast<float>(d));
  if (!out) throw std::runtime_error("failed writing depth map: " + path);
}

std::vector<double> load_grid(const std::string& path, int& width, int& height) {
  std::ifstream in = open_in_binary(path);
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kDepthMagic))
    throw std::runtime_error("not a depth map file: " + path);
  width = static_cast<int>(read_u32(in));
  height = static_cast<int>(read_u32(in));
  const float sentinel = read_f32(in);
  if (width <= 0 || height <= 0 || sentinel != static_cast<float>(SparseDepthMap::kEmpty))
    throw std::runtime_error("bad depth map header: " + path);
  std::vector<double> depth(static_cast<size_t>(width) * height);
  for (auto& d : depth) d = read_f32(in);
  if (!in) throw std::runtime_error("truncated depth map: " + path);
  return depth;
}

}  // namespace

void save_depth(const SparseDepthMap& map, const std::string& path) {
  save_grid(map.depth, map.width, map.height, path);
}

void save_depth(const DenseDepthMap& map, const std::string& path) {
  save_grid(map.depth, map.width, map.height, path);
}

SparseDepthMap load_sparse_depth(const std::string& path) {
  SparseDepthMap map;
  map.depth = load_grid(path, map.width, map.height);
  map.valid_count = 0;
  for (double d : map.depth) {
    if (d != SparseDepthMap::kEmpty) ++map.valid_count;
  }
  return map;
}

DenseDepthMap load_dense_depth(const std::string& path) {
  DenseDepthMap map;
  map.depth = load_grid(path, map.width, map.height);
  for (double d : map.depth) {
    if (d == SparseDepthMap::kEmpty)
      throw std::runtime_error("dense depth map contains empty cells: " + path);
  }
  return map;
}

void save_depth_pgm(const SparseDepthMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write PGM file: " + path);
  double max_d = 0.0;
  for (double d : map.depth) max_d = std::max(max_d, d);
  out << "P2\n" << map.width << " " << map.height << "\n65535\n";
  for (int v = 0; v < map.height; ++v) {
    for (int u = 0; u < map.width; ++u) {
      const double d = map.at(u, v);
      const long g = (d == SparseDepthMap::kEmpty || max_d <= 0.0)
                         ? 0
                         : std::lround(d / max_d * 65535.0);
      out << g << (u + 1 < map.width ? ' ' : '\n');
    }
  }
  if (!out) throw std::runtime_error("failed writing PGM file: " + path);
}

}  // namespace pointfuse
