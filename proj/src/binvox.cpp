#include "fewrec/binvox.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fewrec {

namespace {

struct Cursor {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }

    std::string line() {
        std::size_t start = pos;
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        if (pos >= bytes.size()) {
            throw DataError("binvox: unterminated header line at byte offset " +
                            std::to_string(start));
        }
        std::string out(reinterpret_cast<const char*>(bytes.data() + start), pos - start);
        ++pos;  // consume '\n'
        return out;
    }
};

std::string format_real(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// binvox wire index for voxel (x,y,z): x slowest, y fastest
inline std::size_t wire_index(int x, int y, int z, int r) {
    return (static_cast<std::size_t>(x) * r + z) * r + y;
}

}  // namespace

VoxelGrid read_binvox(std::span<const std::uint8_t> bytes) {
    Cursor cur{bytes};

    std::string magic = cur.line();
    if (magic != "#binvox 1") {
        throw DataError("binvox: bad magic line '" + magic + "' at byte offset 0");
    }

    int dim[3] = {0, 0, 0};
    std::array<double, 3> translate{0.0, 0.0, 0.0};
    double scale = 1.0;
    bool saw_dim = false;

    for (;;) {
        std::size_t line_offset = cur.pos;
        std::string line = cur.line();
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "data") break;
        if (key == "dim") {
            if (!(ss >> dim[0] >> dim[1] >> dim[2])) {
                throw DataError("binvox: malformed dim line at byte offset " +
                                std::to_string(line_offset));
            }
            saw_dim = true;
        } else if (key == "translate") {
            if (!(ss >> translate[0] >> translate[1] >> translate[2])) {
                throw DataError("binvox: malformed translate line at byte offset " +
                                std::to_string(line_offset));
            }
        } else if (key == "scale") {
            if (!(ss >> scale)) {
                throw DataError("binvox: malformed scale line at byte offset " +
                                std::to_string(line_offset));
            }
        } else {
            throw DataError("binvox: unknown header keyword '" + key + "' at byte offset " +
                            std::to_string(line_offset));
        }
    }

    if (!saw_dim) {
        throw DataError("binvox: missing dim line");
    }
    if (dim[0] < 1 || dim[0] != dim[1] || dim[0] != dim[2]) {
        throw DataError("binvox: unsupported dim " + std::to_string(dim[0]) + " " +
                        std::to_string(dim[1]) + " " + std::to_string(dim[2]));
    }
    const int r = dim[0];
    const std::size_t total = static_cast<std::size_t>(r) * r * r;

    std::vector<std::uint8_t> wire(total, 0);
    std::size_t filled = 0;
    while (filled < total) {
        if (cur.pos + 2 > bytes.size()) {
            throw DataError("binvox: RLE underrun, decoded " + std::to_string(filled) + " of " +
                            std::to_string(total) + " voxels at byte offset " +
                            std::to_string(cur.pos));
        }
        std::uint8_t value = bytes[cur.pos];
        std::uint8_t count = bytes[cur.pos + 1];
        if (value > 1) {
            throw DataError("binvox: RLE value " + std::to_string(value) +
                            " not in {0,1} at byte offset " + std::to_string(cur.pos));
        }
        if (count == 0) {
            throw DataError("binvox: RLE count 0 at byte offset " + std::to_string(cur.pos + 1));
        }
        if (filled + count > total) {
            throw DataError("binvox: RLE overrun, " + std::to_string(filled + count) +
                            " voxels exceed declared " + std::to_string(total) +
                            " at byte offset " + std::to_string(cur.pos));
        }
        std::memset(wire.data() + filled, value, count);
        filled += count;
        cur.pos += 2;
    }
    if (!cur.eof()) {
        throw DataError("binvox: trailing bytes after RLE payload at byte offset " +
                        std::to_string(cur.pos));
    }

    VoxelGrid grid(r);
    grid.translate = translate;
    grid.scale = scale;
    for (int x = 0; x < r; ++x) {
        for (int y = 0; y < r; ++y) {
            for (int z = 0; z < r; ++z) {
                grid.occupancy()[grid.index(x, y, z)] = wire[wire_index(x, y, z, r)];
            }
        }
    }
    return grid;
}

std::vector<std::uint8_t> write_binvox(const VoxelGrid& grid) {
    const int r = grid.resolution();
    if (r < 1) {
        throw ConfigError("write_binvox: empty grid object");
    }
    std::string header = "#binvox 1\n";
    header += "dim " + std::to_string(r) + " " + std::to_string(r) + " " + std::to_string(r) + "\n";
    header += "translate " + format_real(grid.translate[0]) + " " + format_real(grid.translate[1]) +
              " " + format_real(grid.translate[2]) + "\n";
    header += "scale " + format_real(grid.scale) + "\n";
    header += "data\n";

    const std::size_t total = static_cast<std::size_t>(r) * r * r;
    std::vector<std::uint8_t> wire(total);
    for (int x = 0; x < r; ++x) {
        for (int y = 0; y < r; ++y) {
            for (int z = 0; z < r; ++z) {
                wire[wire_index(x, y, z, r)] = grid.occupancy()[grid.index(x, y, z)];
            }
        }
    }

    std::vector<std::uint8_t> out(header.begin(), header.end());
    std::size_t i = 0;
    while (i < total) {
        std::uint8_t value = wire[i];
        std::size_t run = 1;
        while (i + run < total && wire[i + run] == value && run < 255) ++run;
        out.push_back(value);
        out.push_back(static_cast<std::uint8_t>(run));
        i += run;
    }
    return out;
}

VoxelGrid load_binvox(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("binvox: cannot open " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    try {
        return read_binvox(bytes);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

void save_binvox(const VoxelGrid& grid, const std::string& path) {
    auto bytes = write_binvox(grid);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("binvox: cannot write " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace fewrec
