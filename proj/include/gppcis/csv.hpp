#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gppcis {

/// Number text for CSV cells: %.10g, "nan" for NaN.
std::string csv_number(double v, int precision = 10);

/// Writes one row; cells containing a comma, quote or newline are quoted.
void write_csv_row(std::ostream& out, const std::vector<std::string>& cells);

/// Row of numbers.
void write_csv_row(std::ostream& out, const std::vector<double>& values, int precision = 10);

}  // namespace gppcis
