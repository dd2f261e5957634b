#include "pathbench/fsutil.hpp"

#include <fstream>
#include <stdexcept>

namespace pathbench {

void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
    atomic_write_with(path, [&](const std::filesystem::path& tmp) {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.close();
        if (!out) throw std::runtime_error(tmp.string() + ": write failed");
    });
}

} // namespace pathbench
