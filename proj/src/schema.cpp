#include "tabgen/schema.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "tabgen/error.hpp"

namespace tabgen {

using nlohmann::json;

bool operator==(const ColumnSpec& a, const ColumnSpec& b) {
    return a.name == b.name && a.kind == b.kind && a.categories == b.categories;
}

std::size_t TableSchema::num_count() const {
    std::size_t n = 0;
    for (const auto& c : columns) n += (c.kind == ColumnKind::Numerical);
    return n;
}

std::size_t TableSchema::cat_count() const { return columns.size() - num_count(); }

std::vector<std::size_t> TableSchema::numerical_positions() const {
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p < columns.size(); ++p)
        if (columns[p].kind == ColumnKind::Numerical) out.push_back(p);
    return out;
}

std::vector<std::size_t> TableSchema::categorical_positions() const {
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p < columns.size(); ++p)
        if (columns[p].kind == ColumnKind::Categorical) out.push_back(p);
    return out;
}

std::size_t TableSchema::kind_slot(std::size_t p) const {
    std::size_t slot = 0;
    for (std::size_t i = 0; i < p; ++i)
        if (columns[i].kind == columns[p].kind) ++slot;
    return slot;
}

std::size_t TableSchema::cardinality(std::size_t cat_slot) const {
    return cat_spec(cat_slot).categories.size();
}

const ColumnSpec& TableSchema::cat_spec(std::size_t cat_slot) const {
    std::size_t seen = 0;
    for (const auto& c : columns) {
        if (c.kind != ColumnKind::Categorical) continue;
        if (seen == cat_slot) return c;
        ++seen;
    }
    throw ValidationError("categorical slot out of range");
}

const ColumnSpec& TableSchema::num_spec(std::size_t num_slot) const {
    std::size_t seen = 0;
    for (const auto& c : columns) {
        if (c.kind != ColumnKind::Numerical) continue;
        if (seen == num_slot) return c;
        ++seen;
    }
    throw ValidationError("numerical slot out of range");
}

std::size_t TableSchema::position_of(const std::string& name) const {
    for (std::size_t p = 0; p < columns.size(); ++p)
        if (columns[p].name == name) return p;
    throw ValidationError("schema has no column named '" + name + "'");
}

void TableSchema::validate(bool require_vocab) const {
    if (columns.empty()) throw ValidationError("schema: no columns");
    std::unordered_set<std::string> names;
    for (const auto& c : columns) {
        if (c.name.empty()) throw ValidationError("schema: empty column name");
        if (!names.insert(c.name).second)
            throw ValidationError("schema: duplicate column name '" + c.name + "'");
        if (c.kind == ColumnKind::Numerical) {
            if (!c.categories.empty())
                throw ValidationError("schema: numerical column '" + c.name +
                                      "' must not list categories");
        } else {
            if (require_vocab && c.categories.empty())
                throw ValidationError("schema: categorical column '" + c.name +
                                      "' has an empty vocabulary");
            std::unordered_set<std::string> cats;
            for (const auto& v : c.categories)
                if (!cats.insert(v).second)
                    throw ValidationError("schema: duplicate category '" + v +
                                          "' in column '" + c.name + "'");
        }
    }
}

TableSchema TableSchema::subset(const std::vector<std::string>& names) const {
    std::unordered_set<std::string> want(names.begin(), names.end());
    if (want.size() != names.size())
        throw ValidationError("schema subset: duplicate column names requested");
    TableSchema out;
    for (const auto& c : columns)
        if (want.count(c.name)) {
            out.columns.push_back(c);
            want.erase(c.name);
        }
    if (!want.empty())
        throw ValidationError("schema subset: column '" + *want.begin() + "' not in schema");
    return out;
}

std::string TableSchema::to_json() const {
    json cols = json::array();
    for (const auto& c : columns) {
        json jc;
        jc["name"] = c.name;
        jc["kind"] = (c.kind == ColumnKind::Numerical) ? "numerical" : "categorical";
        if (c.kind == ColumnKind::Categorical) jc["categories"] = c.categories;
        cols.push_back(jc);
    }
    json root;
    root["columns"] = cols;
    return root.dump(2);
}

TableSchema TableSchema::from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("schema: invalid JSON: ") + e.what());
    }
    if (!root.is_object() || !root.contains("columns"))
        throw ValidationError("schema: expected object with a 'columns' array");
    for (auto& [key, _] : root.items())
        if (key != "columns") throw ValidationError("schema: unknown key '" + key + "'");
    TableSchema s;
    for (const auto& jc : root["columns"]) {
        ColumnSpec c;
        for (auto& [key, _] : jc.items())
            if (key != "name" && key != "kind" && key != "categories")
                throw ValidationError("schema: unknown column key '" + key + "'");
        c.name = jc.at("name").get<std::string>();
        std::string kind = jc.at("kind").get<std::string>();
        if (kind == "numerical")
            c.kind = ColumnKind::Numerical;
        else if (kind == "categorical")
            c.kind = ColumnKind::Categorical;
        else
            throw ValidationError("schema: unknown kind '" + kind + "' for column '" +
                                  c.name + "'");
        if (jc.contains("categories"))
            c.categories = jc["categories"].get<std::vector<std::string>>();
        s.columns.push_back(std::move(c));
    }
    s.validate(false);
    return s;
}

TableSchema TableSchema::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open schema file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void TableSchema::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ComputeError("cannot write schema file: " + path);
    out << to_json() << "\n";
}

}  // namespace tabgen
