#pragma once

#include "facegan/config.hpp"

namespace facegan::testing {

/// 32x32, base width 4, depth 3: the miniature model for gradient checks.
inline GeneratorConfig mini_generator() {
  GeneratorConfig g;
  g.image_size = 32;
  g.base_width = 4;
  g.depth = 3;
  return g;
}

inline DiscriminatorConfig mini_discriminator() {
  DiscriminatorConfig d;
  d.base_width = 4;
  return d;
}

}  // namespace facegan::testing
