#include <doctest.h>

#include "notegate/ioutil.hpp"
#include "notegate/matrix.hpp"
#include "test_support.hpp"

using namespace notegate;

TEST_CASE("f32m round trip preserves shape, grid and float32 payload")
{
    testsupport::TempDir tmp("f32m");
    Matrix m(3, 4);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) m(r, c) = 0.25 * static_cast<double>(r * 4 + c) - 1.0;
    FrameGrid grid{0.020, 0.010};

    const std::string path = tmp.path("m.f32m");
    write_f32m(path, m, grid);
    const FramedMatrix back = read_f32m(path);

    CHECK(back.m.rows() == 3);
    CHECK(back.m.cols() == 4);
    CHECK(back.grid.hop_seconds == doctest::Approx(0.020).epsilon(1e-12));
    CHECK(back.grid.frame_zero_time == doctest::Approx(0.010).epsilon(1e-12));
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(back.m(r, c) == doctest::Approx(m(r, c)).epsilon(1e-7));
}

TEST_CASE("f32m rejects wrong magic and truncated payloads")
{
    testsupport::TempDir tmp("f32m_bad");
    const std::string path = tmp.path("bad.f32m");

    write_file_atomic(path, "NOPE");
    CHECK_THROWS_AS(read_f32m(path), DataError);

    Matrix m(2, 2, 1.0);
    std::string good = encode_f32m(m, {});
    write_file_atomic(path, good.substr(0, good.size() - 3));
    CHECK_THROWS_AS(read_f32m(path), DataError);
}

TEST_CASE("atomic write replaces content fully")
{
    testsupport::TempDir tmp("atomic");
    const std::string path = tmp.path("x.txt");
    write_file_atomic(path, "first");
    write_file_atomic(path, "second");
    CHECK(read_file(path) == "second");
}
