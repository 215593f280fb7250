#include "notegate/ioutil.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>

#include "notegate/common.hpp"

namespace notegate {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(cat("cannot open file for reading: ", path));
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw DataError(cat("read failed: ", path));
    return bytes;
}

void write_file_atomic(const std::string& path, const std::string& bytes)
{
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path dir = target.parent_path();
    if (dir.empty()) dir = ".";

    static std::atomic<unsigned> counter{0};
    fs::path tmp = dir / cat(".", target.filename().string(), ".tmp", counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError(cat("cannot open file for writing: ", tmp.string()));
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw DataError(cat("write failed: ", tmp.string()));
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw DataError(cat("cannot replace ", path, ": ", ec.message()));
    }
}

} // namespace notegate
