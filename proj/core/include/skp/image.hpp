#pragma once

#include <string>
#include <vector>

namespace skp {

// Row-major RGB image with values in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels; // 3 * width * height

    Image() = default;
    Image(int width, int height)
        : width(width), height(height),
          pixels(static_cast<size_t>(3) * width * height, 0.0) {}

    double& at(int y, int x, int c) {
        return pixels[3 * (static_cast<size_t>(y) * width + x) + c];
    }
    double at(int y, int x, int c) const {
        return pixels[3 * (static_cast<size_t>(y) * width + x) + c];
    }
    bool same_shape(const Image& other) const {
        return width == other.width && height == other.height;
    }
};

// Snaps every channel to the 8-bit grid (k / 255), the domain in which
// stored PNGs and freshly rendered images are compared.
Image quantize8(const Image& image);

// 8-bit PNG I/O. Writing stores RGB; reading accepts gray/RGB/RGBA (alpha is
// dropped, 16-bit depth narrowed).
Image read_png(const std::string& path);
void write_png(const Image& image, const std::string& path);

} // namespace skp
