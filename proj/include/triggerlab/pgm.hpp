#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace triggerlab {

/// Binary (P5) grayscale PGM, maxval 255, row-major pixels.
inline void write_pgm(const std::string& path, int height, int width,
                      const std::vector<std::uint8_t>& pixels) {
    if (height < 1 || width < 1 ||
        pixels.size() != static_cast<std::size_t>(height) * width)
        throw std::invalid_argument("write_pgm: bad dimensions");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open PGM for writing: " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    if (!out) throw std::runtime_error("failed writing PGM: " + path);
}

}  // namespace triggerlab
