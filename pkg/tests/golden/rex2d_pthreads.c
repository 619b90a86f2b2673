/* Generated self-scheduling tiled executor (target: pthreads). */
/* Workers claim lex-minimal unclaimed virtual processors and run
   their tiles in local time order: acquire, tile body, update. */

#include <pthread.h>
#include <limits.h>
#include <stdio.h>
#include <stdlib.h>

#ifndef M_b
#define M_b 8
#endif
#ifndef N_b
#define N_b 8
#endif
#ifndef NTHREADS
#define NTHREADS 4
#endif

#define hsd_floord(a, b) (((a) < 0) ? -((-(a) + (b) - 1) / (b)) : (a) / (b))
#define hsd_ceild(a, b) (-hsd_floord(-(a), (b)))
#define hsd_max(a, b) ((a) > (b) ? (a) : (b))
#define hsd_min(a, b) ((a) < (b) ? (a) : (b))
#define TIME_BOTTOM LONG_MIN

/* Tile body stub for signature S: define before compiling. */
#ifndef TILE_S
#define TILE_S(p0, t0) /* tile body */
#endif

#define P0_LO ((0))
#define P0_SIZE (((M_b)) - ((0)) + 1)
#define N_VP_SLOTS (P0_SIZE)
#define STATE_INDEX(p0) ((p0 - P0_LO))

static long (*State_S)[1];
static long (*__Queue)[1];
static long __n_vps = 0;
static long task_ptr = 0;
static pthread_mutex_t mutexptr = PTHREAD_MUTEX_INITIALIZER;
static pthread_mutex_t mutexsync = PTHREAD_MUTEX_INITIALIZER;
static pthread_cond_t sync_cv = PTHREAD_COND_INITIALIZER;

static int time_ge_S(const long *entry, long q0) {
  if (entry[0] == TIME_BOTTOM) return 0;
  if (entry[0] != q0) return entry[0] > q0;
  return 1; /* equal counts as reached */
}

/* Wait until the producer entry reaches the required time:
   bounded busy wait (2 polls), then suspend on the condition. */
static void check_S(long p0, long q0) {
  const long *entry = State_S[STATE_INDEX(p0)];
  int _counter = 0;
  while (!time_ge_S(entry, q0)) {
    pthread_mutex_lock(&mutexsync);
    _counter++;
    /* limit on busy waiting */
    if (_counter > 2 && !time_ge_S(entry, q0))
      pthread_cond_wait(&sync_cv, &mutexsync);
    pthread_mutex_unlock(&mutexsync);
  }
}

/* Publish the completed time and wake every waiter. */
static void update_S(long p0, long t0) {
  pthread_mutex_lock(&mutexsync);
  State_S[STATE_INDEX(p0)][0] = t0;
  pthread_cond_broadcast(&sync_cv);
  pthread_mutex_unlock(&mutexsync);
}

static void build_queue(void) {
  __Queue = malloc(sizeof(long[1]) * N_VP_SLOTS);
  State_S = malloc(sizeof(long[1]) * N_VP_SLOTS);
  for (long i = 0; i < N_VP_SLOTS; i++)
    for (int d = 0; d < 1; d++) State_S[i][d] = TIME_BOTTOM;
  long p0_lo = (0);
  long p0_hi = (M_b);
  for (long p0 = p0_lo; p0 <= p0_hi; p0++) {
    __Queue[__n_vps][0] = p0;
    __n_vps++;
  }
}

/* Claim the lex-minimal unclaimed virtual processor, repeatedly. */
static void *process_block(void *arg) {
  for (;;) {
    /* mutexptr guards access to task_ptr; task_ptr always
       gives the lex minimum unclaimed block */
    pthread_mutex_lock(&mutexptr);
    long idx = task_ptr++;
    pthread_mutex_unlock(&mutexptr);
    if (idx >= __n_vps) break;
    long p0 = __Queue[idx][0];
    long t0_lo = (0);
    long t0_hi = (N_b);
    for (long t0 = t0_lo; t0 <= t0_hi; t0++) {
      /* acquire: first statement of the tile */
      if ((p0 - 1) >= 0 && (-p0 + M_b) >= 0 && (t0 - 1) >= 0 && (-t0 + N_b) >= 0) {
        check_S(p0 - 1, t0);
      }
      if ((p0 - 1) >= 0 && (-p0 + M_b) >= 0 && (t0) == 0) {
        check_S(p0 - 1, t0);
      }
      TILE_S(p0, t0);
      /* update: last statement of the tile */
      update_S(p0, t0);
    }
  }
  return NULL;
}

int main(void) {
  build_queue();
  pthread_t th[NTHREADS];
  for (int i = 0; i < NTHREADS; i++)
    pthread_create(&th[i], NULL, process_block, NULL);
  for (int i = 0; i < NTHREADS; i++)
    pthread_join(th[i], NULL);
  printf("executed %ld virtual processors\n", __n_vps);
  return 0;
}
