/** Replay geometry and timing for one episode.
 *
 * Payload paths are lists of [time, x, y, z] samples on a shared clock; the
 * animation clock spans exactly the payload time base, and the closest
 * racket-ball approach is recomputed from the payload so the marker always
 * matches what the evaluator sees.
 */

import type { EpisodeView, ProjectedPoint, TimedPoint } from './types'

export class MalformedPayloadError extends Error {
  constructor(message: string) {
    super(message)
    this.name = 'MalformedPayloadError'
  }
}

function checkPath(path: TimedPoint[], name: string): void {
  if (!Array.isArray(path) || path.length === 0) {
    throw new MalformedPayloadError(`${name} is empty`)
  }
  for (const row of path) {
    if (!Array.isArray(row) || row.length !== 4 || row.some((v) => !Number.isFinite(v))) {
      throw new MalformedPayloadError(`${name} has a malformed sample`)
    }
  }
  for (let i = 1; i < path.length; i++) {
    if (path[i]![0] < path[i - 1]![0]) {
      throw new MalformedPayloadError(`${name} timestamps are not sorted`)
    }
  }
}

/** Validate the payload invariants: both paths present, same length, and
 * time-aligned sample for sample on the shared clock. */
export function validateEpisode(view: EpisodeView): void {
  checkPath(view.ball_path, 'ball_path')
  checkPath(view.ee_path, 'ee_path')
  if (view.ball_path.length !== view.ee_path.length) {
    throw new MalformedPayloadError('ball and racket paths differ in length')
  }
  for (let i = 0; i < view.ball_path.length; i++) {
    if (view.ball_path[i]![0] !== view.ee_path[i]![0]) {
      throw new MalformedPayloadError('paths are not time-aligned')
    }
  }
}

/** Seconds spanned by the payload time base. */
export function episodeDuration(view: EpisodeView): number {
  const t = view.ball_path
  return t[t.length - 1]![0] - t[0]![0]
}

function distance(a: TimedPoint, b: TimedPoint): number {
  const dx = a[1] - b[1]
  const dy = a[2] - b[2]
  const dz = a[3] - b[3]
  return Math.sqrt(dx * dx + dy * dy + dz * dz)
}

/** Sample index of the racket-ball closest approach. */
export function closestApproachIndex(view: EpisodeView): number {
  let best = 0
  let bestDist = Infinity
  for (let i = 0; i < view.ball_path.length; i++) {
    const d = distance(view.ball_path[i]!, view.ee_path[i]!)
    if (d < bestDist) {
      bestDist = d
      best = i
    }
  }
  return best
}

/** Minimum racket-ball distance over the payload. */
export function minApproachDistance(view: EpisodeView): number {
  return distance(
    view.ball_path[closestApproachIndex(view)]!,
    view.ee_path[closestApproachIndex(view)]!,
  )
}

/** Top (x, y) and side (x, z) projections, matching the server layout. */
export function project(path: TimedPoint[]): {
  top: ProjectedPoint[]
  side: ProjectedPoint[]
} {
  return {
    top: path.map((p) => [p[0], p[1], p[2]] as ProjectedPoint),
    side: path.map((p) => [p[0], p[1], p[3]] as ProjectedPoint),
  }
}

/** Maps elapsed wall-clock seconds to a payload sample index.
 *
 * The clock spans exactly the episode duration; a stationary or
 * single-sample path renders as a static frame (index 0 forever is avoided
 * by clamping: once elapsed passes the duration the last frame holds).
 */
export class ReplayClock {
  readonly duration: number

  constructor(private readonly times: number[]) {
    if (times.length === 0) {
      throw new MalformedPayloadError('replay needs at least one sample')
    }
    this.duration = times[times.length - 1]! - times[0]!
  }

  static forEpisode(view: EpisodeView): ReplayClock {
    return new ReplayClock(view.ball_path.map((p) => p[0]))
  }

  /** Last sample whose time offset is <= elapsed (clamped to the end). */
  indexAt(elapsed: number): number {
    if (this.duration === 0) return 0
    if (elapsed <= 0) return 0
    const t0 = this.times[0]!
    let index = 0
    for (let i = 0; i < this.times.length; i++) {
      if (this.times[i]! - t0 <= elapsed) index = i
      else break
    }
    return index
  }

  finished(elapsed: number): boolean {
    return elapsed >= this.duration
  }
}
