#include "tabgen/kernels/kernels.hpp"

#include <cstdlib>
#include <string>

namespace tabgen::kern {
namespace {

struct Selection {
    const Ops* table;
    std::string name;
};

Selection select() {
    const char* force = std::getenv("TABGEN_ISA");
    if (force != nullptr) {
        std::string want(force);
        if (want == "scalar") return {&scalar_ops(), "scalar"};
        if (want == "avx2" && avx2_ops() != nullptr) return {avx2_ops(), "avx2"};
        // Unknown or unavailable requests fall through to auto-detection.
    }
    if (const Ops* v = avx2_ops()) return {v, "avx2"};
    return {&scalar_ops(), "scalar"};
}

const Selection& selection() {
    static const Selection s = select();
    return s;
}

}  // namespace

const Ops& ops() { return *selection().table; }
const std::string& isa_name() { return selection().name; }

}  // namespace tabgen::kern
