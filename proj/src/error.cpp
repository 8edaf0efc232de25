#include "kwnr/error.hpp"

#include <algorithm>

namespace kwnr {

DataError::DataError(const std::string &message, std::size_t row, std::string column)
    : Error{[&] {
          std::string text = message;
          if (row > 0) {
              text += " (row " + std::to_string(row);
              if (!column.empty()) {
                  text += ", column '" + column + "'";
              }
              text += ")";
          } else if (!column.empty()) {
              text += " (column '" + column + "')";
          }
          return text;
      }()},
      row_{row}, column_{std::move(column)} {}

FitError::FitError(Kind kind, const std::string &message, double last_score_norm)
    : Error{message}, kind_{kind}, last_score_norm_{last_score_norm} {}

OrphanError::OrphanError(std::vector<std::size_t> orphans)
    : Error{[&] {
          std::string text = "kernel row sums to zero for " + std::to_string(orphans.size()) +
                             " reference unit(s):";
          const std::size_t shown = std::min<std::size_t>(orphans.size(), 10);
          for (std::size_t k = 0; k < shown; ++k) {
              text += " " + std::to_string(orphans[k]);
          }
          if (shown < orphans.size()) {
              text += " ...";
          }
          text += "; widen the bandwidth";
          return text;
      }()},
      orphans_{std::move(orphans)} {}

} // namespace kwnr
