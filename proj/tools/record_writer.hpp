#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ebsim::tools {

enum class Format { Csv, Jsonl };

Format parse_format(const std::string& name);  // "csv" or "jsonl"

using Value = std::variant<bool, std::uint64_t, std::int64_t, double, std::string,
                           std::vector<double>, std::vector<std::uint64_t>>;

// Ordered key/value bag; insertion order is the output order.
class Record {
public:
    Record& add(std::string key, bool v);
    Record& add(std::string key, std::uint64_t v);
    Record& add(std::string key, std::int64_t v);
    Record& add(std::string key, int v);
    Record& add(std::string key, double v);
    Record& add(std::string key, std::string v);
    Record& add(std::string key, const char* v);
    Record& add(std::string key, std::vector<double> v);
    Record& add(std::string key, std::vector<std::uint64_t> v);

    const std::vector<std::pair<std::string, Value>>& fields() const { return fields_; }

private:
    std::vector<std::pair<std::string, Value>> fields_;
};

// Streams records as CSV triples (record,key,value) under a "# config:"
// comment, or as JSON lines after a meta record carrying the same config.
// Numbers render with 17 significant digits so reruns are byte-stable.
class RecordWriter {
public:
    RecordWriter(std::ostream& out, Format format,
                 std::vector<std::pair<std::string, std::string>> config);

    void write(const std::string& name, const Record& record);

private:
    std::ostream& out_;
    Format format_;
    std::map<std::string, std::uint64_t> seq_;
};

std::string fmt_double(double v);
std::string fmt_uint(std::uint64_t v);
std::string fmt_int(std::int64_t v);

} // namespace ebsim::tools
