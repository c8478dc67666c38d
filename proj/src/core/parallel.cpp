#include "brpatch/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace brpatch {

unsigned worker_count()
{
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BRPATCH_THREADS")) {
        try {
            const long cap = std::stol(env);
            if (cap > 0) {
                n = static_cast<unsigned>(std::min(cap, 256L));
            }
        } catch (const std::exception&) {
            // unparsable values leave the default in place
        }
    }
    return n;
}

} // namespace brpatch
