#include "notegate/matrix.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>

#include "notegate/ioutil.hpp"

namespace notegate {

namespace {

constexpr char kMagic[4] = {'F', '3', '2', 'M'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v)
{
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void put_f64(std::string& out, double v)
{
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& origin) : b_(bytes), origin_(origin) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(byte()); }

    std::uint32_t u32()
    {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }

    float f32()
    {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    double f64()
    {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(byte()) << (8 * i);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    std::size_t remaining() const { return b_.size() - pos_; }

    unsigned char byte()
    {
        if (pos_ >= b_.size()) throw DataError(cat("truncated F32M data: ", origin_));
        return static_cast<unsigned char>(b_[pos_++]);
    }

private:
    const std::string& b_;
    std::string origin_;
    std::size_t pos_ = 0;
};

} // namespace

std::string encode_f32m(const Matrix& m, const FrameGrid& grid)
{
    std::string out;
    out.reserve(29 + 4 * m.rows() * m.cols());
    out.append(kMagic, 4);
    out.push_back(static_cast<char>(kVersion));
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    put_f64(out, grid.hop_seconds);
    put_f64(out, grid.frame_zero_time);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            put_f32(out, static_cast<float>(m(r, c)));
    return out;
}

FramedMatrix decode_f32m(const std::string& bytes, const std::string& origin)
{
    if (bytes.size() < 29 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw DataError(cat("not an F32M file: ", origin));
    Reader rd(bytes, origin);
    rd.u32(); // magic, already checked
    std::uint8_t version = rd.u8();
    if (version != kVersion)
        throw DataError(cat("unsupported F32M version ", int(version), ": ", origin));
    std::uint32_t rows = rd.u32();
    std::uint32_t cols = rd.u32();
    FramedMatrix out;
    out.grid.hop_seconds = rd.f64();
    out.grid.frame_zero_time = rd.f64();
    std::size_t need = static_cast<std::size_t>(rows) * cols * 4;
    if (rd.remaining() != need)
        throw DataError(cat("F32M payload size mismatch (", rd.remaining(), " bytes, expected ",
                            need, "): ", origin));
    out.m = Matrix(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out.m(r, c) = rd.f32();
    return out;
}

void write_f32m(const std::string& path, const Matrix& m, const FrameGrid& grid)
{
    write_file_atomic(path, encode_f32m(m, grid));
}

FramedMatrix read_f32m(const std::string& path)
{
    return decode_f32m(read_file(path), path);
}

void write_matrix_tsv(const std::string& path, const Matrix& m)
{
    std::string out;
    char buf[48];
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.9g", m(r, c));
            if (c) out.push_back('\t');
            out += buf;
        }
        out.push_back('\n');
    }
    write_file_atomic(path, out);
}

} // namespace notegate
