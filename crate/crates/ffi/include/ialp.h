#ifndef IALP_H
#define IALP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum IalpStatus {
  IALP_STATUS_OK = 0,
  IALP_STATUS_NULL_POINTER = 1,
  IALP_STATUS_INVALID_ARGUMENT = 2,
  IALP_STATUS_IO = 3,
  IALP_STATUS_PARSE = 4,
  IALP_STATUS_NON_FINITE = 5,
  IALP_STATUS_CHECKPOINT = 6,
  IALP_STATUS_CONFIG = 7,
  IALP_STATUS_BUFFER_TOO_SMALL = 8,
  IALP_STATUS_INTERNAL = 9,
} IalpStatus;

// A trained or freshly initialised agent.
typedef struct IalpAgent IalpAgent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Create a randomly initialised agent; `*out` receives the handle.
//
// # Safety
// `out` must be valid for writes.
enum IalpStatus ialp_agent_new(size_t embed_dim,
                               size_t max_seq_len,
                               size_t num_items,
                               double gamma,
                               uint64_t seed,
                               struct IalpAgent **out);

// Load an agent checkpoint; `*out` receives the handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum IalpStatus ialp_agent_load(const char *path, struct IalpAgent **out);

// Write the agent to a checkpoint file.
//
// # Safety
// `agent` must come from this library and `path` be a NUL-terminated string.
enum IalpStatus ialp_agent_save(const struct IalpAgent *agent, const char *path);

// Release a handle. Null is ignored.
//
// # Safety
// `agent` must come from this library and not be used afterwards.
void ialp_agent_free(struct IalpAgent *agent);

// Catalogue size of the agent, or 0 for a null handle.
//
// # Safety
// `agent` must be null or come from this library.
size_t ialp_agent_num_items(const struct IalpAgent *agent);

// Actor softmax over all items after `history`, written to `out[0..num_items]`.
//
// # Safety
// `history` must hold `history_len` ids and `out` room for `out_len` doubles.
enum IalpStatus ialp_agent_action_distribution(const struct IalpAgent *agent,
                                               const size_t *history,
                                               size_t history_len,
                                               double *out,
                                               size_t out_len);

// Critic Q-values of all items after `history`, written to `out[0..num_items]`.
//
// # Safety
// `history` must hold `history_len` ids and `out` room for `out_len` doubles.
enum IalpStatus ialp_agent_q_values(const struct IalpAgent *agent,
                                    const size_t *history,
                                    size_t history_len,
                                    double *out,
                                    size_t out_len);

// Most probable item under the actor; ties go to the lowest id.
//
// # Safety
// `history` must hold `history_len` ids and `out` be valid for writes.
enum IalpStatus ialp_agent_greedy_action(const struct IalpAgent *agent,
                                         const size_t *history,
                                         size_t history_len,
                                         size_t *out);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *ialp_last_error(void);

// Static name of a status code.
const char *ialp_status_name(enum IalpStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IALP_H */
