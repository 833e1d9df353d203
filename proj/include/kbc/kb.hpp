#pragma once

// Triple datasets: vocabulary coding, inverse augmentation, and the indexes
// used for prototype lookup and filtered ranking.
//
// Relation ids live in [0, 2B) for B base relations; the inverse of base
// relation r is r + B. Head queries (?, r, t) are always rewritten as tail
// queries (t, r^-1, ?), so everything downstream only handles tail form.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kbc/error.hpp"

namespace kbc {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

using EntityPair = std::pair<EntityId, EntityId>;

class Vocabulary {
 public:
  Vocabulary() = default;

  // Loads `id<TAB>name` dictionaries; the result is frozen.
  static Vocabulary from_dicts(const std::filesystem::path& entities,
                               const std::filesystem::path& relations);

  bool extendable() const { return extendable_; }
  void freeze() { extendable_ = false; }

  // Returns the id for `name`, assigning the next id when the vocabulary is
  // extendable. Throws VocabularyError for unknown names once frozen.
  EntityId intern_entity(std::string_view name);
  RelationId intern_relation(std::string_view name);

  std::optional<EntityId> find_entity(std::string_view name) const;
  // Accepts base names and inverse labels ("name^-1" or "name⁻¹").
  std::optional<RelationId> find_relation(std::string_view name) const;

  // Like find_*, but throws VocabularyError with nearest-name suggestions.
  EntityId entity_id(std::string_view name) const;
  RelationId relation_id(std::string_view name) const;

  const std::string& entity_name(EntityId e) const;
  const std::string& base_relation_name(RelationId r) const;
  // Base name, with "^-1" (ascii) or "⁻¹" appended for inverse ids.
  std::string relation_label(RelationId r, bool ascii = true) const;

  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_base_relations() const { return relations_.size(); }
  std::size_t num_relations() const { return 2 * relations_.size(); }

  RelationId inverse(RelationId r) const;
  bool is_inverse(RelationId r) const {
    return r >= static_cast<RelationId>(relations_.size());
  }
  bool valid_entity(EntityId e) const {
    return e >= 0 && static_cast<std::size_t>(e) < entities_.size();
  }
  bool valid_relation(RelationId r) const {
    return r >= 0 && static_cast<std::size_t>(r) < num_relations();
  }

  std::vector<std::string> nearest_entities(std::string_view name,
                                            std::size_t k = 3) const;
  std::vector<std::string> nearest_relations(std::string_view name,
                                             std::size_t k = 3) const;

 private:
  std::vector<std::string> entities_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
  bool extendable_ = true;
};

struct LoadedTriples {
  Vocabulary vocab;
  std::vector<Triple> triples;
};

// Reads `head<TAB>relation<TAB>tail` lines. New names extend the vocabulary
// only if it is absent or extendable. Blank lines are skipped.
LoadedTriples load_tsv(const std::filesystem::path& path,
                       std::optional<Vocabulary> vocab = std::nullopt);

// Appends (t, r^-1, h) for every (h, r, t); output is input followed by the
// inverses in the same order. Throws VocabularyError on invalid ids.
std::vector<Triple> augment_inverses(std::span<const Triple> triples,
                                     const Vocabulary& vocab);

// Sorted, deduplicated triple set with (h, r) -> tails and r -> (h, t) access.
class TripleIndex {
 public:
  TripleIndex() = default;
  TripleIndex(std::span<const Triple> triples, std::size_t num_relations);

  std::span<const EntityId> tails(EntityId h, RelationId r) const;
  // (h, t) pairs of relation r, ordered by (h, t).
  std::span<const EntityPair> pairs(RelationId r) const;
  // Distinct heads of relation r, ascending.
  std::span<const EntityId> heads(RelationId r) const;
  bool contains(const Triple& t) const;
  std::size_t size() const { return pairs_.size(); }
  std::size_t num_relations() const {
    return rel_offsets_.empty() ? 0 : rel_offsets_.size() - 1;
  }

 private:
  static std::uint64_t key(EntityId h, RelationId r) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(r)) << 32) |
           static_cast<std::uint32_t>(h);
  }

  std::vector<EntityPair> pairs_;
  std::vector<EntityId> tails_;
  std::vector<std::size_t> rel_offsets_;
  std::vector<EntityId> heads_;
  std::vector<std::size_t> head_offsets_;
  std::unordered_map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>>
      ranges_;
};

enum class Split { Train, Valid, Test };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

class KnowledgeBase {
 public:
  // Triples use base relation ids; the vocabulary is frozen on construction.
  KnowledgeBase(Vocabulary vocab, std::vector<Triple> train,
                std::vector<Triple> valid, std::vector<Triple> test);

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t num_entities() const { return vocab_.num_entities(); }
  std::size_t num_relations() const { return vocab_.num_relations(); }

  // Triples as loaded, file order, duplicates kept.
  std::span<const Triple> split(Split s) const;
  // split(s) followed by its inverse triples.
  std::span<const Triple> augmented(Split s) const;

  const TripleIndex& train_index() const { return train_index_; }

  std::span<const EntityId> tails_of(EntityId h, RelationId r) const {
    return train_index_.tails(h, r);
  }
  // {p | (p, r, t) in train}, ascending.
  std::span<const EntityId> prototypes_of(RelationId r, EntityId t) const {
    return train_index_.tails(t, vocab_.inverse(r));
  }
  // {(p, t) | (p, r, t) in train}, ordered by (p, t).
  std::span<const EntityPair> prototype_candidates(RelationId r) const {
    return train_index_.pairs(r);
  }
  // All t with (h, r, t) known in any split.
  std::span<const EntityId> filtered_mask(EntityId h, RelationId r) const {
    return known_index_.tails(h, r);
  }
  bool is_train_fact(const Triple& t) const { return train_index_.contains(t); }
  bool is_known_fact(const Triple& t) const { return known_index_.contains(t); }
  const TripleIndex& known_index() const { return known_index_; }

 private:
  Vocabulary vocab_;
  std::vector<Triple> splits_[3];
  std::vector<Triple> augmented_[3];
  TripleIndex train_index_;
  TripleIndex known_index_;
};

// Loads <dir>/{train,valid,test}.txt, pinning ids from entities.dict and
// relations.dict when both exist. Otherwise ids follow first appearance in
// train, then valid, then test.
KnowledgeBase load_dataset(const std::filesystem::path& dir);

// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace kbc
