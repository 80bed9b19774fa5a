#ifndef POWER_PACKET_H
#define POWER_PACKET_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PpStatus {
  PP_STATUS_OK = 0,
  PP_STATUS_NULL_POINTER = 1,
  PP_STATUS_INVALID_ARGUMENT = 2,
  PP_STATUS_BUFFER_TOO_SMALL = 3,
  PP_STATUS_FRAMING = 4,
  PP_STATUS_RESERVED_INDEX = 5,
  PP_STATUS_INDEX_OUT_OF_RANGE = 6,
  PP_STATUS_CONFIG = 7,
  PP_STATUS_SIMULATION = 8,
  PP_STATUS_PANIC = 9,
} PpStatus;

/**
 * Dynamic quantizer with its running state.
 */
typedef struct PpQuantizer PpQuantizer;

/**
 * Result of a completed run.
 */
typedef struct PpTrace PpTrace;

/**
 * One slot of a trace. `source_index` is 0 when no source conducted.
 */
typedef struct PpSlot {
  uint64_t k;
  double u;
  double v_selected;
  uint32_t source_index;
  double x;
  double y;
  double y_ref;
  double current_avg;
  double energy;
  bool framing_ok;
} PpSlot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code. Never null.
 */
const char *pp_status_message(enum PpStatus status);

/**
 * Header length in bits for the default protocol.
 */
size_t pp_header_bit_length(void);

/**
 * Writes the header for `index` as 0/1 bytes into `out`, which holds `cap`
 * bytes.
 *
 * # Safety
 * `out` must be valid for `cap` writes.
 */
enum PpStatus pp_header_encode(uint32_t index, uint8_t *out, size_t cap);

/**
 * Decodes `len` bytes of 0/1 (any nonzero byte reads as 1).
 *
 * # Safety
 * `bits` must be valid for `len` reads and `index` for one write.
 */
enum PpStatus pp_header_decode(const uint8_t *bits, size_t len, uint32_t *index);

/**
 * Quantizer designed for the built-in circuit, with zero initial state.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum PpStatus pp_quantizer_new_default(struct PpQuantizer **out);

/**
 * # Safety
 * `q` must be a live handle; each out pointer must be null or writable.
 */
enum PpStatus pp_quantizer_coefficients(const struct PpQuantizer *q,
                                        double *a_q,
                                        double *b_q,
                                        double *c_q);

/**
 * Advances the quantizer by one slot. `port` is the zero-based level index.
 *
 * # Safety
 * `q` must be a live handle; `v` and `port` must be writable.
 */
enum PpStatus pp_quantizer_step(struct PpQuantizer *q, double u, double *v, size_t *port);

/**
 * # Safety
 * `q` must be null or a handle not yet freed.
 */
void pp_quantizer_free(struct PpQuantizer *q);

/**
 * Runs the built-in experiment for `n_slots` slots.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum PpStatus pp_run_default(uint64_t n_slots, struct PpTrace **out);

/**
 * Runs the experiment described by a NUL-terminated TOML document.
 *
 * # Safety
 * `toml` must be a valid C string and `out` valid for one write.
 */
enum PpStatus pp_run_toml(const char *toml, struct PpTrace **out);

/**
 * Number of slots in the trace, 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t pp_trace_len(const struct PpTrace *t);

/**
 * # Safety
 * `t` must be a live handle and `out` writable.
 */
enum PpStatus pp_trace_slot(const struct PpTrace *t, size_t k, struct PpSlot *out);

/**
 * Maximum and RMS tracking error of the run.
 *
 * # Safety
 * `t` must be a live handle; out pointers must be null or writable.
 */
enum PpStatus pp_trace_errors(const struct PpTrace *t, double *max_error, double *rms_error);

/**
 * Net energy drawn from source `index` (1-based).
 *
 * # Safety
 * `t` must be a live handle and `energy` writable.
 */
enum PpStatus pp_trace_source_energy(const struct PpTrace *t, uint32_t index, double *energy);

/**
 * # Safety
 * `t` must be null or a handle not yet freed.
 */
void pp_trace_free(struct PpTrace *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POWER_PACKET_H */
