#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabgen/schema.hpp"

namespace tabgen {

// A parsed CSV before encoding: every cell kept as text, with a per-cell
// missing flag.  Numeric parsing happens at encode time so that schema
// inference can look at the raw strings.
struct RawTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> cells;  // [row][col]
    std::vector<std::vector<uint8_t>> missing;    // [row][col], 1 = missing

    std::size_t rows() const { return cells.size(); }
    std::size_t cols() const { return header.size(); }
};

// Fully encoded table: numerical columns as doubles (column-major by slot),
// categorical columns as vocabulary indices.  This is the in-memory form all
// model code operates on.
struct Dataset {
    TableSchema schema;
    std::size_t rows = 0;
    // num[slot * rows + r]; slot indexes numerical columns in schema order.
    std::vector<double> num;
    // cat[slot * rows + r]; values in [0, cardinality(slot)).
    std::vector<int32_t> cat;

    double num_at(std::size_t slot, std::size_t r) const { return num[slot * rows + r]; }
    int32_t cat_at(std::size_t slot, std::size_t r) const { return cat[slot * rows + r]; }
    double& num_at(std::size_t slot, std::size_t r) { return num[slot * rows + r]; }
    int32_t& cat_at(std::size_t slot, std::size_t r) { return cat[slot * rows + r]; }
};

// Reads a CSV file: comma separated, first line is the header, double quotes
// escape fields containing commas/quotes/newlines ("" inside a quoted field
// is a literal quote).  Rows with the wrong field count are an error.
RawTable load_csv(const std::string& path);

// Infers a schema from a raw table given which columns are numerical:
// remaining columns become categorical with vocabularies sorted
// lexicographically (empty cells excluded).
TableSchema infer_schema(const RawTable& raw, const std::vector<std::string>& numerical);

// Encodes a raw table against a schema.  Empty or unparseable numeric cells
// and empty categorical cells are treated as missing; categorical values not
// present in the vocabulary are an error.  Missing cells are imputed:
// numerical with the column mean; categorical by appending a dedicated
// "__missing__" label to the vocabulary (suffix bumped on collision).  The
// returned dataset carries the (possibly extended) schema.
Dataset encode(const RawTable& raw, const TableSchema& schema);

// Convenience: load + infer (or use a provided schema) + encode.
Dataset load_dataset(const std::string& csv_path, const TableSchema& schema);

// Decodes a dataset back to text cells and writes a CSV with the same
// dialect load_csv reads.  Doubles are written with the shortest
// round-trippable representation.
void write_csv(const Dataset& ds, const std::string& path);

// Partitions rows into len(ratios) disjoint datasets.  Ratios must be
// positive and sum to 1 (±1e-9); sizes use largest-remainder rounding so
// they always sum to the row count.  The permutation depends only on seed.
std::vector<Dataset> split(const Dataset& ds, const std::vector<double>& ratios,
                           uint64_t seed);

// Select a subset of rows (by index) into a new dataset.
Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& idx);

// Formats a double with the shortest representation that parses back to the
// same value (std::to_chars shortest form).
std::string format_double(double v);

}  // namespace tabgen
