#ifndef ACRL_H
#define ACRL_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum AcrlStatus {
  ACRL_STATUS_OK = 0,
  ACRL_STATUS_NULL_POINTER = 1,
  ACRL_STATUS_INVALID_ARGUMENT = 2,
  ACRL_STATUS_DIMENSION_MISMATCH = 3,
  ACRL_STATUS_INFEASIBLE_ACTION = 4,
  ACRL_STATUS_NOT_PROJECTABLE = 5,
  ACRL_STATUS_NO_CONVERGENCE = 6,
  ACRL_STATUS_SAMPLING_EXHAUSTED = 7,
  ACRL_STATUS_IO = 8,
  ACRL_STATUS_PANIC = 9,
  ACRL_STATUS_INTERNAL = 10,
} AcrlStatus;

// A trained agent plus the random stream used for acting.
typedef struct AcrlAgent AcrlAgent;

// An environment together with its current state and projection counter.
typedef struct AcrlEnv AcrlEnv;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message (NUL terminated, truncated
// to fit) into `buf` and returns the full message length in bytes.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t acrl_last_error(char *buf, size_t len);

// Static NUL-terminated version string.
const char *acrl_version(void);

// Builds an environment by id ("BallReach", "BSS3z", "BSS5z",
// "NSFnetLite", "GridTab") and resets it.
//
// # Safety
// `name` must be a valid C string and `out` a valid pointer.
enum AcrlStatus acrl_env_new(const char *name, uint64_t seed, struct AcrlEnv **out);

// # Safety
// `env` must be null or a handle from [`acrl_env_new`] not yet freed.
void acrl_env_free(struct AcrlEnv *env);

// # Safety
// `env` must be a live handle; `state_dim` and `action_dim` valid pointers.
enum AcrlStatus acrl_env_dims(struct AcrlEnv *env, size_t *state_dim, size_t *action_dim);

// Starts a new episode and writes the initial state.
//
// # Safety
// `state_out` must be valid for `state_len` doubles.
enum AcrlStatus acrl_env_reset(struct AcrlEnv *env, double *state_out, size_t state_len);

// Writes the current state.
//
// # Safety
// `state_out` must be valid for `state_len` doubles.
enum AcrlStatus acrl_env_state(struct AcrlEnv *env, double *state_out, size_t state_len);

// Membership test of `action` in the feasible set at the current state.
//
// # Safety
// `action` must be valid for `action_len` doubles, `feasible` a valid pointer.
enum AcrlStatus acrl_env_is_feasible(struct AcrlEnv *env,
                                     const double *action,
                                     size_t action_len,
                                     bool *feasible);

// Steps the base dynamics. Infeasible actions fail with
// `ACRL_STATUS_INFEASIBLE_ACTION` and leave the environment unchanged.
//
// # Safety
// Pointers must be valid for their stated lengths; `reward` and `done`
// valid pointers.
enum AcrlStatus acrl_env_step(struct AcrlEnv *env,
                              const double *action,
                              size_t action_len,
                              double *state_out,
                              size_t state_len,
                              double *reward,
                              bool *done);

// Euclidean projection of `action` onto the feasible set at the current
// state (intersected with the action box).
//
// # Safety
// `action` and `out` must be valid for `len` doubles.
enum AcrlStatus acrl_env_project(struct AcrlEnv *env,
                                 const double *action,
                                 double *out,
                                 size_t len);

// Projections performed through this handle.
//
// # Safety
// `env` must be a live handle and `count` a valid pointer.
enum AcrlStatus acrl_env_qp_count(struct AcrlEnv *env, uint64_t *count);

// Trains an agent on environment `name` with the desk configuration.
// `algo` is 0 for acceptance-rejection, 1 for the projection baseline.
//
// # Safety
// `name` must be a valid C string and `out` a valid pointer.
enum AcrlStatus acrl_agent_train(const char *name,
                                 uint32_t algo,
                                 uint64_t seed,
                                 uint64_t steps,
                                 struct AcrlAgent **out);

// # Safety
// `agent` must be null or a handle from [`acrl_agent_train`] not yet freed.
void acrl_agent_free(struct AcrlAgent *agent);

// Emits a feasible action for the environment's current state by
// acceptance-rejection (10 attempts, then projection).
//
// # Safety
// Handles must be live; `out` must be valid for `len` doubles.
enum AcrlStatus acrl_agent_act(struct AcrlAgent *agent,
                               struct AcrlEnv *env,
                               double lambda_r,
                               double *out,
                               size_t len);

// Checks the augmented/constrained equivalence on `instances` random
// tabular MDPs; `passed` receives how many had no counterexample.
//
// # Safety
// `passed` must be a valid pointer.
enum AcrlStatus acrl_verify_tabular(uint64_t seed, size_t instances, size_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACRL_H */
