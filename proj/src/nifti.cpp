#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "deltarad/volgrid.hpp"

static_assert(std::endian::native == std::endian::little,
              "NIfTI I/O assumes a little-endian host");

namespace deltarad {

namespace {

// NIfTI-1 header, 348 bytes, no padding on any sane ABI.
struct Nifti1Header {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "unexpected NIfTI-1 header layout");

constexpr std::int16_t DT_UINT8 = 2;
constexpr std::int16_t DT_INT16 = 4;
constexpr std::int16_t DT_INT32 = 8;
constexpr std::int16_t DT_FLOAT32 = 16;
constexpr std::int16_t DT_FLOAT64 = 64;

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

bool is_gzip(const std::vector<std::uint8_t>& b) {
    return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b;
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in, const std::string& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK) throw std::runtime_error("zlib inflateInit failed");
    std::vector<std::uint8_t> out;
    out.reserve(in.size() * 4);
    std::uint8_t buf[1 << 16];
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw std::runtime_error("corrupt gzip stream: " + path);
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
    } while (rc != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
}

// gzip with a pinned header (mtime 0, OS 3) so writes are byte-reproducible
std::vector<std::uint8_t> gzip_deterministic(const std::vector<std::uint8_t>& in) {
    z_stream zs{};
    if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw std::runtime_error("zlib deflateInit failed");
    gz_header hdr{};
    hdr.time = 0;
    hdr.os = 3;
    deflateSetHeader(&zs, &hdr);
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        rc = deflate(&zs, Z_FINISH);
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
    } while (rc != Z_STREAM_END);
    deflateEnd(&zs);
    return out;
}

Geometry geometry_from_sform(const Nifti1Header& h) {
    Geometry g;
    g.dims = {h.dim[1], h.dim[2], h.dim[3]};
    const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    for (int c = 0; c < 3; ++c) {
        double norm = 0.0;
        for (int r = 0; r < 3; ++r) norm += double(rows[r][c]) * rows[r][c];
        norm = std::sqrt(norm);
        if (!(norm > 0.0)) throw std::runtime_error("NIfTI sform has a zero-length axis");
        g.spacing[c] = norm;
        for (int r = 0; r < 3; ++r) g.direction[3 * r + c] = rows[r][c] / norm;
    }
    g.origin = {rows[0][3], rows[1][3], rows[2][3]};
    return g;
}

Geometry geometry_from_qform(const Nifti1Header& h) {
    Geometry g;
    g.dims = {h.dim[1], h.dim[2], h.dim[3]};
    for (int a = 0; a < 3; ++a) g.spacing[a] = std::abs(h.pixdim[a + 1]);
    const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
    const double a2 = 1.0 - (b * b + c * c + d * d);
    const double a = a2 > 0.0 ? std::sqrt(a2) : 0.0;
    const double qfac = (h.pixdim[0] < 0.0f) ? -1.0 : 1.0;
    g.direction = {a * a + b * b - c * c - d * d,
                   2 * (b * c - a * d),
                   qfac * 2 * (b * d + a * c),
                   2 * (b * c + a * d),
                   a * a + c * c - b * b - d * d,
                   qfac * 2 * (c * d - a * b),
                   2 * (b * d - a * c),
                   2 * (c * d + a * b),
                   qfac * (a * a + d * d - b * b - c * c)};
    g.origin = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
    return g;
}

Geometry geometry_from_pixdim(const Nifti1Header& h) {
    Geometry g;
    g.dims = {h.dim[1], h.dim[2], h.dim[3]};
    for (int a = 0; a < 3; ++a) {
        g.spacing[a] = std::abs(h.pixdim[a + 1]);
        if (!(g.spacing[a] > 0.0)) g.spacing[a] = 1.0;
    }
    return g;
}

}  // namespace

Volume read_nifti(const std::string& path, Unit unit) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("no such file: " + path);
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    if (is_gzip(bytes)) bytes = gunzip(bytes, path);
    if (bytes.size() < sizeof(Nifti1Header))
        throw std::runtime_error("file too small for a NIfTI-1 header: " + path);

    Nifti1Header h;
    std::memcpy(&h, bytes.data(), sizeof(h));
    if (h.sizeof_hdr == 540)
        throw std::runtime_error("NIfTI-2 is not supported, convert to NIfTI-1: " + path);
    if (h.sizeof_hdr != 348) {
        std::int32_t swapped;
        std::uint8_t* p = reinterpret_cast<std::uint8_t*>(&swapped);
        p[0] = bytes[3]; p[1] = bytes[2]; p[2] = bytes[1]; p[3] = bytes[0];
        if (swapped == 348)
            throw std::runtime_error("big-endian NIfTI is not supported: " + path);
        throw std::runtime_error("not a NIfTI-1 file (bad sizeof_hdr): " + path);
    }
    if (std::memcmp(h.magic, "n+1", 4) != 0)
        throw std::runtime_error("bad NIfTI magic (expected single-file \"n+1\"): " + path);
    if (h.dim[0] != 3)
        throw std::runtime_error("only 3-D images are supported (dim[0] != 3): " + path);

    Geometry g;
    if (h.sform_code > 0)
        g = geometry_from_sform(h);
    else if (h.qform_code > 0)
        g = geometry_from_qform(h);
    else
        g = geometry_from_pixdim(h);
    g.validate();

    const std::size_t n = g.voxel_count();
    const std::size_t offset = static_cast<std::size_t>(h.vox_offset);
    std::size_t elem = 0;
    switch (h.datatype) {
        case DT_UINT8: elem = 1; break;
        case DT_INT16: elem = 2; break;
        case DT_INT32: elem = 4; break;
        case DT_FLOAT32: elem = 4; break;
        case DT_FLOAT64: elem = 8; break;
        default:
            throw std::runtime_error("unsupported NIfTI datatype " + std::to_string(h.datatype) +
                                     ": " + path);
    }
    if (bytes.size() < offset + n * elem)
        throw std::runtime_error("truncated NIfTI voxel data: " + path);

    const std::uint8_t* src = bytes.data() + offset;
    std::vector<double> values(n);
    switch (h.datatype) {
        case DT_UINT8:
            for (std::size_t i = 0; i < n; ++i) values[i] = src[i];
            break;
        case DT_INT16: {
            std::int16_t v;
            for (std::size_t i = 0; i < n; ++i) {
                std::memcpy(&v, src + 2 * i, 2);
                values[i] = v;
            }
            break;
        }
        case DT_INT32: {
            std::int32_t v;
            for (std::size_t i = 0; i < n; ++i) {
                std::memcpy(&v, src + 4 * i, 4);
                values[i] = v;
            }
            break;
        }
        case DT_FLOAT32: {
            float v;
            for (std::size_t i = 0; i < n; ++i) {
                std::memcpy(&v, src + 4 * i, 4);
                values[i] = v;
            }
            break;
        }
        case DT_FLOAT64: {
            double v;
            for (std::size_t i = 0; i < n; ++i) {
                std::memcpy(&v, src + 8 * i, 8);
                values[i] = v;
            }
            break;
        }
    }
    if (h.scl_slope != 0.0f) {
        const double slope = h.scl_slope, inter = h.scl_inter;
        for (double& v : values) v = v * slope + inter;
    }
    for (double v : values)
        if (!std::isfinite(v)) throw std::runtime_error("NIfTI contains non-finite values: " + path);

    return Volume(g, std::move(values), unit);
}

void write_nifti(const Volume& v, const std::string& path, const std::string& descrip) {
    v.geom.validate();
    Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(v.geom.dims[0]);
    h.dim[2] = static_cast<std::int16_t>(v.geom.dims[1]);
    h.dim[3] = static_cast<std::int16_t>(v.geom.dims[2]);
    for (int i = 4; i < 8; ++i) h.dim[i] = 1;
    h.datatype = DT_FLOAT32;
    h.bitpix = 32;
    h.pixdim[0] = 1.0f;
    for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(v.geom.spacing[a]);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2;  // millimeters
    std::strncpy(h.descrip, descrip.c_str(), sizeof(h.descrip) - 1);
    h.qform_code = 0;
    h.sform_code = 1;
    float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c)
            rows[r][c] = static_cast<float>(v.geom.direction[3 * r + c] * v.geom.spacing[c]);
        rows[r][3] = static_cast<float>(v.geom.origin[r]);
    }
    std::memcpy(h.magic, "n+1", 4);

    std::vector<std::uint8_t> bytes(352 + v.values.size() * 4, 0);
    std::memcpy(bytes.data(), &h, sizeof(h));
    float* out = reinterpret_cast<float*>(bytes.data() + 352);
    for (std::size_t i = 0; i < v.values.size(); ++i) out[i] = static_cast<float>(v.values[i]);

    if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0)
        bytes = gzip_deterministic(bytes);

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write file: " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("short write: " + path);
}

Volume read_nifti_mask_volume(const std::string& path) { return read_nifti(path, Unit::Intensity); }

BinaryMask read_nifti_mask(const std::string& path, double threshold) {
    const Volume v = read_nifti(path);
    std::vector<std::uint8_t> bits(v.values.size());
    for (std::size_t i = 0; i < v.values.size(); ++i) bits[i] = v.values[i] >= threshold ? 1 : 0;
    return BinaryMask(v.geom, std::move(bits));
}

void write_nifti_mask(const BinaryMask& m, const std::string& path, const std::string& descrip) {
    std::vector<double> values(m.bits.size());
    for (std::size_t i = 0; i < m.bits.size(); ++i) values[i] = m.bits[i] ? 1.0 : 0.0;
    write_nifti(Volume(m.geom, std::move(values)), path, descrip);
}

}  // namespace deltarad
