#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vaudit/imaging.hpp"

namespace vaudit {

/// Maps an image into the retrieval index's embedding space.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;
  /// Unit-norm vector of length dim().
  virtual std::vector<float> embed(const Image& img) const = 0;
};

/// Block-averaged color thumbnail (grid x grid x 3), mean-centered and
/// L2-normalized. Gray input is replicated across the three color slots.
/// A featureless image embeds to the first basis vector.
///
/// This is the built-in stand-in for a learned image embedding: corpora
/// produced by `vaudit simulate` are indexed with it, so query-time embedding
/// of generated images lands in the same space.
class ThumbnailEmbedder final : public Embedder {
 public:
  explicit ThumbnailEmbedder(std::size_t grid = 8);

  std::size_t dim() const override { return grid_ * grid_ * 3; }
  std::string name() const override;
  std::vector<float> embed(const Image& img) const override;

 private:
  std::size_t grid_;
};

}  // namespace vaudit
