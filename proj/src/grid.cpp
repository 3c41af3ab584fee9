#include "flutterlab/grid.hpp"

#include <sstream>

namespace flutterlab {

PlateGrid build_grid(double L1, double L2, int n1, int n2) {
    if (!(L1 > 0.0) || !(L2 > 0.0)) {
        std::ostringstream os;
        os << "build_grid: side lengths must be positive (got " << L1 << ", " << L2 << ")";
        throw Error(os.str());
    }
    if (n1 < 8 || n2 < 8) {
        std::ostringstream os;
        os << "build_grid: need at least 8 interior nodes per axis (got " << n1 << ", " << n2
           << ")";
        throw Error(os.str());
    }
    PlateGrid g;
    g.L1 = L1;
    g.L2 = L2;
    g.n1 = n1;
    g.n2 = n2;
    g.h1 = L1 / (n1 + 1);
    g.h2 = L2 / (n2 + 1);
    return g;
}

void check_shape(const PlateGrid& g, const Field& f, const char* what) {
    if (f.size() != g.size()) {
        std::ostringstream os;
        os << what << ": field has " << f.size() << " values, grid expects " << g.size();
        throw Error(os.str());
    }
}

}  // namespace flutterlab
