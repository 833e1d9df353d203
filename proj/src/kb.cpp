#include "kbc/kb.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace kbc {
namespace {

constexpr std::string_view kAsciiInverse = "^-1";
constexpr std::string_view kUnicodeInverse = "⁻¹";

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::vector<std::string> nearest(const std::vector<std::string>& names,
                                 std::string_view query, std::size_t k) {
  std::vector<std::pair<std::size_t, std::size_t>> scored;
  scored.reserve(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    scored.emplace_back(edit_distance(names[i], query), i);
  }
  k = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(k),
                    scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(names[scored[i].second]);
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ", ";
    out += "'" + s + "'";
  }
  return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::pair<std::size_t, std::string>> load_dict(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dictionary " + path.string());
  std::vector<std::pair<std::size_t, std::string>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2) {
      throw ParseError(path.string(), line_no, "expected id<TAB>name");
    }
    std::size_t id = 0;
    try {
      id = std::stoul(std::string(fields[0]));
    } catch (const std::exception&) {
      throw ParseError(path.string(), line_no, "non-numeric id");
    }
    rows.emplace_back(id, std::string(fields[1]));
  }
  std::sort(rows.begin(), rows.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != i) {
      throw ParseError(path.string(), 0, "ids must be 0..n-1 without gaps");
    }
  }
  return rows;
}

}  // namespace

Vocabulary Vocabulary::from_dicts(const std::filesystem::path& entities,
                                  const std::filesystem::path& relations) {
  Vocabulary v;
  for (auto& [id, name] : load_dict(entities)) {
    if (v.intern_entity(name) != static_cast<EntityId>(id)) {
      throw ParseError(entities.string(), 0, "duplicate name '" + name + "'");
    }
  }
  for (auto& [id, name] : load_dict(relations)) {
    if (v.intern_relation(name) != static_cast<RelationId>(id)) {
      throw ParseError(relations.string(), 0, "duplicate name '" + name + "'");
    }
  }
  v.freeze();
  return v;
}

EntityId Vocabulary::intern_entity(std::string_view name) {
  std::string key(name);
  if (auto it = entity_index_.find(key); it != entity_index_.end()) {
    return it->second;
  }
  if (!extendable_) {
    throw VocabularyError("unknown entity '" + key + "'");
  }
  const auto id = static_cast<EntityId>(entities_.size());
  entities_.push_back(key);
  entity_index_.emplace(std::move(key), id);
  return id;
}

RelationId Vocabulary::intern_relation(std::string_view name) {
  std::string key(name);
  if (auto it = relation_index_.find(key); it != relation_index_.end()) {
    return it->second;
  }
  if (!extendable_) {
    throw VocabularyError("unknown relation '" + key + "'");
  }
  const auto id = static_cast<RelationId>(relations_.size());
  relations_.push_back(key);
  relation_index_.emplace(std::move(key), id);
  return id;
}

std::optional<EntityId> Vocabulary::find_entity(std::string_view name) const {
  if (auto it = entity_index_.find(std::string(name));
      it != entity_index_.end()) {
    return it->second;
  }
  return std::nullopt;
}

std::optional<RelationId> Vocabulary::find_relation(
    std::string_view name) const {
  if (auto it = relation_index_.find(std::string(name));
      it != relation_index_.end()) {
    return it->second;
  }
  for (std::string_view suffix : {kAsciiInverse, kUnicodeInverse}) {
    if (ends_with(name, suffix)) {
      auto base = find_relation(name.substr(0, name.size() - suffix.size()));
      if (base && !is_inverse(*base)) return inverse(*base);
    }
  }
  return std::nullopt;
}

EntityId Vocabulary::entity_id(std::string_view name) const {
  if (auto id = find_entity(name)) return *id;
  throw VocabularyError("unknown entity '" + std::string(name) +
                        "'; did you mean " + join(nearest_entities(name)) +
                        "?");
}

RelationId Vocabulary::relation_id(std::string_view name) const {
  if (auto id = find_relation(name)) return *id;
  throw VocabularyError("unknown relation '" + std::string(name) +
                        "'; did you mean " + join(nearest_relations(name)) +
                        "?");
}

const std::string& Vocabulary::entity_name(EntityId e) const {
  if (!valid_entity(e)) {
    throw VocabularyError("entity id out of range: " + std::to_string(e));
  }
  return entities_[static_cast<std::size_t>(e)];
}

const std::string& Vocabulary::base_relation_name(RelationId r) const {
  if (!valid_relation(r)) {
    throw VocabularyError("relation id out of range: " + std::to_string(r));
  }
  return relations_[static_cast<std::size_t>(is_inverse(r) ? inverse(r) : r)];
}

std::string Vocabulary::relation_label(RelationId r, bool ascii) const {
  std::string label = base_relation_name(r);
  if (is_inverse(r)) label += ascii ? kAsciiInverse : kUnicodeInverse;
  return label;
}

RelationId Vocabulary::inverse(RelationId r) const {
  if (!valid_relation(r)) {
    throw VocabularyError("relation id out of range: " + std::to_string(r));
  }
  const auto base = static_cast<RelationId>(relations_.size());
  return r < base ? r + base : r - base;
}

std::vector<std::string> Vocabulary::nearest_entities(std::string_view name,
                                                      std::size_t k) const {
  return nearest(entities_, name, k);
}

std::vector<std::string> Vocabulary::nearest_relations(std::string_view name,
                                                       std::size_t k) const {
  return nearest(relations_, name, k);
}

LoadedTriples load_tsv(const std::filesystem::path& path,
                       std::optional<Vocabulary> vocab) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  LoadedTriples out{vocab ? std::move(*vocab) : Vocabulary{}, {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw ParseError(path.string(), line_no,
                       "expected 3 tab-separated fields, got " +
                           std::to_string(fields.size()));
    }
    try {
      Triple t;
      t.head = out.vocab.intern_entity(fields[0]);
      t.relation = out.vocab.intern_relation(fields[1]);
      t.tail = out.vocab.intern_entity(fields[2]);
      out.triples.push_back(t);
    } catch (const VocabularyError& e) {
      throw VocabularyError(path.string() + ":" + std::to_string(line_no) +
                            ": " + e.what());
    }
  }
  return out;
}

std::vector<Triple> augment_inverses(std::span<const Triple> triples,
                                     const Vocabulary& vocab) {
  std::vector<Triple> out(triples.begin(), triples.end());
  out.reserve(2 * triples.size());
  for (const Triple& t : triples) {
    if (!vocab.valid_entity(t.head) || !vocab.valid_entity(t.tail) ||
        !vocab.valid_relation(t.relation)) {
      throw VocabularyError("triple with out-of-range id");
    }
    out.push_back({t.tail, vocab.inverse(t.relation), t.head});
  }
  return out;
}

TripleIndex::TripleIndex(std::span<const Triple> triples,
                         std::size_t num_relations) {
  std::vector<Triple> sorted(triples.begin(), triples.end());
  std::sort(sorted.begin(), sorted.end(), [](const Triple& a, const Triple& b) {
    return std::tie(a.relation, a.head, a.tail) <
           std::tie(b.relation, b.head, b.tail);
  });
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  rel_offsets_.assign(num_relations + 1, 0);
  head_offsets_.assign(num_relations + 1, 0);
  pairs_.reserve(sorted.size());
  tails_.reserve(sorted.size());
  for (const Triple& t : sorted) {
    if (t.relation < 0 || static_cast<std::size_t>(t.relation) >= num_relations) {
      throw VocabularyError("relation id out of range in index");
    }
    ++rel_offsets_[static_cast<std::size_t>(t.relation) + 1];
    pairs_.emplace_back(t.head, t.tail);
    tails_.push_back(t.tail);
  }
  std::partial_sum(rel_offsets_.begin(), rel_offsets_.end(),
                   rel_offsets_.begin());

  std::size_t i = 0;
  for (std::size_t r = 0; r < num_relations; ++r) {
    head_offsets_[r] = heads_.size();
    while (i < rel_offsets_[r + 1]) {
      std::size_t j = i;
      const EntityId h = pairs_[i].first;
      while (j < rel_offsets_[r + 1] && pairs_[j].first == h) ++j;
      ranges_.emplace(key(h, static_cast<RelationId>(r)),
                      std::pair{static_cast<std::uint32_t>(i),
                                static_cast<std::uint32_t>(j)});
      heads_.push_back(h);
      i = j;
    }
  }
  head_offsets_[num_relations] = heads_.size();
}

std::span<const EntityId> TripleIndex::tails(EntityId h, RelationId r) const {
  auto it = ranges_.find(key(h, r));
  if (it == ranges_.end()) return {};
  return std::span<const EntityId>(tails_).subspan(
      it->second.first, it->second.second - it->second.first);
}

std::span<const EntityPair> TripleIndex::pairs(RelationId r) const {
  if (r < 0 || static_cast<std::size_t>(r) >= num_relations()) return {};
  const auto b = rel_offsets_[static_cast<std::size_t>(r)];
  const auto e = rel_offsets_[static_cast<std::size_t>(r) + 1];
  return std::span<const EntityPair>(pairs_).subspan(b, e - b);
}

std::span<const EntityId> TripleIndex::heads(RelationId r) const {
  if (r < 0 || static_cast<std::size_t>(r) >= num_relations()) return {};
  const auto b = head_offsets_[static_cast<std::size_t>(r)];
  const auto e = head_offsets_[static_cast<std::size_t>(r) + 1];
  return std::span<const EntityId>(heads_).subspan(b, e - b);
}

bool TripleIndex::contains(const Triple& t) const {
  const auto tails_span = tails(t.head, t.relation);
  return std::binary_search(tails_span.begin(), tails_span.end(), t.tail);
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Valid:
      return "valid";
    case Split::Test:
      return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(s) +
                    "' (expected train, valid or test)");
}

KnowledgeBase::KnowledgeBase(Vocabulary vocab, std::vector<Triple> train,
                             std::vector<Triple> valid,
                             std::vector<Triple> test)
    : vocab_(std::move(vocab)) {
  vocab_.freeze();
  splits_[0] = std::move(train);
  splits_[1] = std::move(valid);
  splits_[2] = std::move(test);
  std::vector<Triple> known;
  for (int s = 0; s < 3; ++s) {
    for (const Triple& t : splits_[s]) {
      if (vocab_.is_inverse(t.relation)) {
        throw VocabularyError("split triples must use base relation ids");
      }
    }
    augmented_[s] = augment_inverses(splits_[s], vocab_);
    known.insert(known.end(), augmented_[s].begin(), augmented_[s].end());
  }
  train_index_ = TripleIndex(augmented_[0], vocab_.num_relations());
  known_index_ = TripleIndex(known, vocab_.num_relations());
}

std::span<const Triple> KnowledgeBase::split(Split s) const {
  return splits_[static_cast<int>(s)];
}

std::span<const Triple> KnowledgeBase::augmented(Split s) const {
  return augmented_[static_cast<int>(s)];
}

KnowledgeBase load_dataset(const std::filesystem::path& dir) {
  const std::array<std::string, 3> names = {"train.txt", "valid.txt",
                                            "test.txt"};
  for (const auto& n : names) {
    if (!std::filesystem::exists(dir / n)) {
      throw DatasetError("missing dataset file " + (dir / n).string());
    }
  }
  std::optional<Vocabulary> vocab;
  if (std::filesystem::exists(dir / "entities.dict") &&
      std::filesystem::exists(dir / "relations.dict")) {
    vocab = Vocabulary::from_dicts(dir / "entities.dict",
                                   dir / "relations.dict");
  }
  auto train = load_tsv(dir / names[0], std::move(vocab));
  auto valid = load_tsv(dir / names[1], std::move(train.vocab));
  auto test = load_tsv(dir / names[2], std::move(valid.vocab));
  return KnowledgeBase(std::move(test.vocab), std::move(train.triples),
                       std::move(valid.triples), std::move(test.triples));
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::uint64_t h = 14695981039346656037ULL;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace kbc
