#include "calvid/blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "calvid/errors.hpp"

namespace calvid::blob {

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

int64_t byte_size(const Shape& shape) {
    return 4 + 4 + 4 * static_cast<int64_t>(shape.size()) + 4 * shape_size(shape);
}

void write(std::ostream& os, const Tensor& t) {
    os.write(kMagic, 4);
    uint32_t rank = static_cast<uint32_t>(t.rank());
    os.write(reinterpret_cast<const char*>(&rank), 4);
    for (int64_t e : t.shape()) {
        uint32_t ext = static_cast<uint32_t>(e);
        os.write(reinterpret_cast<const char*>(&ext), 4);
    }
    os.write(reinterpret_cast<const char*>(t.data()), 4 * t.size());
    if (!os) throw MissingArtifactError("blob write failed");
}

Tensor read(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw MissingArtifactError("bad blob magic (expected CC3T)");
    uint32_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), 4);
    if (!is || rank > 16) throw MissingArtifactError("bad blob rank");
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) {
        uint32_t ext = 0;
        is.read(reinterpret_cast<char*>(&ext), 4);
        shape[i] = static_cast<int64_t>(ext);
    }
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()), 4 * t.size());
    if (!is) throw MissingArtifactError("truncated blob payload");
    return t;
}

Tensor read_at(const std::string& path, int64_t offset) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("cannot open blob file: " + path);
    is.seekg(offset);
    return read(is);
}

void write_file(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MissingArtifactError("cannot create blob file: " + path);
    write(os, t);
}

Tensor read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("cannot open blob file: " + path);
    return read(is);
}

}  // namespace calvid::blob
