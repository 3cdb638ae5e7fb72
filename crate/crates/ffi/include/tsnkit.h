#ifndef TSNKIT_H
#define TSNKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum TsnStatus {
  TSN_STATUS_OK = 0,
  TSN_STATUS_NULL_ARGUMENT = 1,
  TSN_STATUS_INVALID_UTF8 = 2,
  /*
   Malformed JSON or a value of the wrong shape.
   */
  TSN_STATUS_PARSE_ERROR = 3,
  /*
   The input parsed but describes an invalid network, flow set or configuration.
   */
  TSN_STATUS_MODEL_ERROR = 4,
  TSN_STATUS_PANIC = 5,
} TsnStatus;

/*
 Opaque flow-set handle.
 */
typedef struct TsnFlowSet TsnFlowSet;

/*
 Opaque network handle.
 */
typedef struct TsnNetwork TsnNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Parses a network. On success `*out` owns a handle for [`tsn_network_free`].

 # Safety
 `json` must be null or a NUL-terminated string; `out` must be null or writable.
 */
enum TsnStatus tsn_network_from_json(const char *json, struct TsnNetwork **out);

/*
 # Safety
 `network` must be null or a handle from [`tsn_network_from_json`] not yet freed.
 */
void tsn_network_free(struct TsnNetwork *network);

/*
 Parses a flow list. On success `*out` owns a handle for [`tsn_flowset_free`].

 # Safety
 `json` must be null or a NUL-terminated string; `out` must be null or writable.
 */
enum TsnStatus tsn_flowset_from_json(const char *json, struct TsnFlowSet **out);

/*
 # Safety
 `flows` must be null or a handle from [`tsn_flowset_from_json`] not yet freed.
 */
void tsn_flowset_free(struct TsnFlowSet *flows);

/*
 Number of flows in the set, or 0 for a null handle.

 # Safety
 `flows` must be null or a live handle.
 */
size_t tsn_flowset_len(const struct TsnFlowSet *flows);

/*
 Runs the traversal-time analysis and writes the JSON report to `*out`.
 `config_json` is null or `{"level": m, "entries": [..]}`.

 # Safety
 Handles must be live; strings NUL-terminated or null; `out` writable.
 */
enum TsnStatus tsn_analyze_json(const struct TsnNetwork *network,
                                const struct TsnFlowSet *flows,
                                const char *config_json,
                                char **out);

/*
 Searches for the lowest schedulable preemption level and writes the
 result as JSON to `*out`.

 # Safety
 Handles must be live; `out` writable.
 */
enum TsnStatus tsn_synthesize_json(const struct TsnNetwork *network,
                                   const struct TsnFlowSet *flows,
                                   char **out);

/*
 Simulates with random phases drawn from `seed` up to `horizon_us`
 microseconds (0 means 100 times the largest period) and writes the JSON
 report to `*out`.

 # Safety
 Handles must be live; strings NUL-terminated or null; `out` writable.
 */
enum TsnStatus tsn_simulate_json(const struct TsnNetwork *network,
                                 const struct TsnFlowSet *flows,
                                 const char *config_json,
                                 uint64_t horizon_us,
                                 uint64_t seed,
                                 char **out);

/*
 Message for the last failed call on this thread, or null. The pointer is
 valid until the next call into the library from the same thread.
 */
const char *tsn_last_error(void);

/*
 Releases a string returned by this library.

 # Safety
 `s` must be null or a string from this library not yet freed.
 */
void tsn_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSNKIT_H */
