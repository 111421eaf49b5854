#include "thermal/common.hpp"

namespace thermal {

std::string_view to_string(ProteinStatus s) {
    switch (s) {
        case ProteinStatus::Ok: return "Ok";
        case ProteinStatus::FilteredPsm: return "FilteredPsm";
        case ProteinStatus::FilteredReplicates: return "FilteredReplicates";
        case ProteinStatus::FilteredDegenerate: return "FilteredDegenerate";
        case ProteinStatus::FitFailed: return "FitFailed";
    }
    return "Unknown";
}

}  // namespace thermal
