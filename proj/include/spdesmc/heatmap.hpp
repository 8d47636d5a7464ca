#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace spdesmc {

// Diverging colormap, piecewise linear between five anchors over t in [0,1]:
//   t = 0.00  ( 59,  76, 192)
//   t = 0.25  (124, 159, 249)
//   t = 0.50  (247, 247, 247)
//   t = 0.75  (238, 110,  84)
//   t = 1.00  (180,   4,  38)
// Channels are interpolated independently and rounded to nearest.
std::array<std::uint8_t, 3> colormap(double t);

// Renders a matrix as an 8-bit RGB PNG (no interlacing), row i of the matrix
// at the top. Values map symmetrically about zero: t = 1/2 + v / (2 max|v|);
// an all-zero matrix renders the mid color. Each matrix entry becomes an
// upscale x upscale pixel block. Output bytes are deterministic.
void render_heatmap(const Eigen::MatrixXd& values, const std::string& path, int upscale = 1);

// 8-bit RGB PNG with stored (uncompressed) deflate blocks
void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<std::uint8_t>& rgb);

}  // namespace spdesmc
