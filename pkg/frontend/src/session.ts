/** Client-side rating session flow.
 *
 * Pulls episodes from the service queue in order, guards against duplicate
 * submissions (one in-flight rating at a time; a displayed episode can be
 * rated at most once), and resolves conflicts by refreshing the queue.
 */

import type { ApiError, FeedbackApi } from './api'
import { isValidReward } from './criteria'
import { validateEpisode } from './replay'
import type { EpisodeView, MetricsRow, SessionSummary } from './types'

export type SessionPhase = 'rating' | 'round-complete' | 'done'

export interface RateResult {
  submitted: boolean
  phase: SessionPhase
}

function isApiError(err: unknown): err is ApiError {
  return err instanceof Error && err.name === 'ApiError'
}

export class RatingSession {
  private current: EpisodeView | null = null
  private submitting = false
  private ratedIds = new Set<string>()
  private lastRound = 0

  constructor(private readonly api: FeedbackApi) {}

  get currentEpisode(): EpisodeView | null {
    return this.current
  }

  async summary(): Promise<SessionSummary> {
    return this.api.getSession()
  }

  /** Fetch and validate the next pending episode, or null when the queue is
   * empty (round closed or session done). */
  async loadNext(): Promise<EpisodeView | null> {
    try {
      const view = await this.api.getNextEpisode()
      validateEpisode(view)
      this.current = view
      return view
    } catch (err) {
      if (isApiError(err) && err.status === 404) {
        this.current = null
        return null
      }
      throw err
    }
  }

  /** Submit a rating for the displayed episode.
   *
   * Repeat calls while a submission is in flight, or after the episode has
   * been rated, are no-ops ({submitted: false}) so a double-click produces
   * exactly one stored rating. Off-scale rewards are rejected before any
   * network traffic.
   */
  async rate(reward: number): Promise<RateResult> {
    if (!isValidReward(reward)) {
      throw new RangeError(`reward ${reward} is not one of the five criteria`)
    }
    const episode = this.current
    if (!episode || this.submitting || this.ratedIds.has(episode.episode_id)) {
      return { submitted: false, phase: await this.phase() }
    }
    this.submitting = true
    try {
      const ack = await this.api.submitRating(episode.episode_id, reward)
      this.ratedIds.add(episode.episode_id)
      this.current = null
      return { submitted: true, phase: this.phaseFrom(ack.session) }
    } catch (err) {
      if (isApiError(err) && err.status === 409) {
        // already rated elsewhere or the round closed under us: resync
        this.ratedIds.add(episode.episode_id)
        this.current = null
        return { submitted: false, phase: await this.phase() }
      }
      throw err
    } finally {
      this.submitting = false
    }
  }

  async metrics(): Promise<MetricsRow[]> {
    return (await this.api.getMetrics()).rows
  }

  private async phase(): Promise<SessionPhase> {
    return this.phaseFrom(await this.api.getSession())
  }

  private phaseFrom(summary: SessionSummary): SessionPhase {
    if (summary.state === 'done') return 'done'
    if (summary.round !== this.lastRound) {
      this.lastRound = summary.round
      return 'round-complete'
    }
    return summary.pending === 0 ? 'round-complete' : 'rating'
  }
}
