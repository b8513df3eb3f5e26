#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tabgen {

enum class ColumnKind { Numerical, Categorical };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::Numerical;
    // Categorical only. The mask state is *not* a category: a column with
    // C real categories uses index C as its transient mask index.
    std::vector<std::string> categories;
};

// Ordered column layout of a table. Numerical and categorical columns can
// interleave; num_index/cat_index give the within-kind slot of a column.
struct TableSchema {
    std::vector<ColumnSpec> columns;

    std::size_t num_count() const;
    std::size_t cat_count() const;

    // Schema positions of numerical (resp. categorical) columns, in order.
    std::vector<std::size_t> numerical_positions() const;
    std::vector<std::size_t> categorical_positions() const;

    // Within-kind slot of the column at schema position p.
    std::size_t kind_slot(std::size_t p) const;

    // Cardinality (real categories, mask excluded) of categorical slot j.
    std::size_t cardinality(std::size_t cat_slot) const;
    const ColumnSpec& cat_spec(std::size_t cat_slot) const;
    const ColumnSpec& num_spec(std::size_t num_slot) const;

    std::size_t position_of(const std::string& name) const;  // throws if absent

    // Unique names; categorical vocabularies duplicate-free. Vocabularies
    // may still be empty here (inferred later from data).
    void validate(bool require_vocab = false) const;

    // Schema restricted to the given column names, keeping this schema's
    // relative order.
    TableSchema subset(const std::vector<std::string>& names) const;

    std::string to_json() const;
    static TableSchema from_json(const std::string& text);
    static TableSchema load(const std::string& path);
    void save(const std::string& path) const;

    bool operator==(const TableSchema&) const = default;
};

bool operator==(const ColumnSpec& a, const ColumnSpec& b);

}  // namespace tabgen
