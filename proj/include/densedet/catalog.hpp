#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "densedet/common.hpp"

namespace densedet {

enum class ClassGroup { majority, minority };

inline const char* to_string(ClassGroup g) {
    return g == ClassGroup::majority ? "majority" : "minority";
}

// One detection class: taxon/status naming kept as metadata, plus the
// label-budget bookkeeping (group + whitelist flag) set by the capping step.
struct ClassSpec {
    int id = 0;
    std::string name;          // "Taxon - Status"
    char status_code = 'L';    // one of D, F, H, L, P
    ClassGroup group = ClassGroup::minority;
    bool whitelisted = false;  // masking applies (capped classes only)
};

class ClassCatalog {
public:
    ClassCatalog() = default;
    explicit ClassCatalog(std::vector<ClassSpec> classes) : classes_(std::move(classes)) {
        validate();
    }

    int size() const { return int(classes_.size()); }
    const ClassSpec& operator[](int id) const { return classes_[size_t(id)]; }
    ClassSpec& operator[](int id) { return classes_[size_t(id)]; }
    const std::vector<ClassSpec>& classes() const { return classes_; }

    std::vector<int> whitelist() const {
        std::vector<int> ids;
        for (const auto& c : classes_)
            if (c.whitelisted) ids.push_back(c.id);
        return ids;
    }

    std::vector<int> group_ids(ClassGroup g) const {
        std::vector<int> ids;
        for (const auto& c : classes_)
            if (c.group == g) ids.push_back(c.id);
        return ids;
    }

    void validate() const {
        static const std::string codes = "DFHLP";
        for (size_t i = 0; i < classes_.size(); ++i) {
            if (classes_[i].id != int(i))
                throw ConfigError("catalog ids must be contiguous from 0");
            if (codes.find(classes_[i].status_code) == std::string::npos)
                throw ConfigError("invalid status code for class " + classes_[i].name);
            if (classes_[i].whitelisted && classes_[i].group != ClassGroup::majority)
                throw ConfigError("whitelisted class must be majority: " + classes_[i].name);
        }
    }

    // Tab-separated manifest: id, name, status code, group, whitelisted.
    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw RuntimeError("cannot write catalog: " + path);
        for (const auto& c : classes_) {
            f << c.id << '\t' << c.name << '\t' << c.status_code << '\t'
              << to_string(c.group) << '\t' << (c.whitelisted ? 1 : 0) << '\n';
        }
    }

    static ClassCatalog load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw RuntimeError("cannot read catalog: " + path);
        std::vector<ClassSpec> classes;
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            ClassSpec c;
            std::string group, code;
            std::string field;
            std::getline(ss, field, '\t'); c.id = std::stoi(field);
            std::getline(ss, c.name, '\t');
            std::getline(ss, code, '\t'); c.status_code = code.empty() ? 'L' : code[0];
            std::getline(ss, group, '\t');
            c.group = group == "majority" ? ClassGroup::majority : ClassGroup::minority;
            std::getline(ss, field, '\t'); c.whitelisted = field == "1";
            classes.push_back(std::move(c));
        }
        return ClassCatalog(std::move(classes));
    }

private:
    std::vector<ClassSpec> classes_;
};

}  // namespace densedet
