#include <sstream>

#include "sign/error.hpp"
#include "sign/rng.hpp"

namespace sign {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::data: return "data";
        case ErrorKind::format: return "format";
        case ErrorKind::divergence: return "divergence";
        case ErrorKind::io: return "io";
        case ErrorKind::range: return "range";
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::contract: return "contract";
    }
    return "unknown";
}

std::string Rng::state() const {
    std::ostringstream out;
    out << engine_ << ' ' << normal_ << ' ' << uniform_;
    return out.str();
}

void Rng::restore(const std::string& blob) {
    std::istringstream in(blob);
    in >> engine_ >> normal_ >> uniform_;
    if (!in) throw FormatError("unreadable random generator state", 0);
}

}  // namespace sign
