/** Thin typed client for the feedback service HTTP API.
 *
 * The fetch implementation is injectable so tests can run against a mock.
 * Ratings are posted with a stable idempotency key and retried on network
 * failure; HTTP error statuses are surfaced as ApiError and never retried
 * (a 409 conflict means the queue is stale, not that the network flaked).
 */

import type {
  EpisodeView,
  MetricsRow,
  RatingAck,
  SessionSummary,
} from './types'

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message)
    this.name = 'ApiError'
  }
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return
  let detail = res.statusText
  try {
    const body = await res.json()
    if (body && typeof body.detail === 'string') detail = body.detail
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, detail)
}

export class FeedbackApi {
  constructor(
    private readonly fetchFn: FetchLike,
    private readonly baseUrl: string = '',
    private readonly maxRetries: number = 3,
    private readonly makeKey: () => string = () =>
      `rating-${Date.now()}-${Math.random().toString(36).slice(2)}`,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path)
    await raiseForStatus(res)
    return (await res.json()) as T
  }

  getSession(): Promise<SessionSummary> {
    return this.getJson('/api/session')
  }

  getNextEpisode(): Promise<EpisodeView> {
    return this.getJson('/api/episodes/next')
  }

  getMetrics(): Promise<{ rows: MetricsRow[] }> {
    return this.getJson('/api/metrics')
  }

  /** Post one rating; network failures are retried with the same key. */
  async submitRating(episodeId: string, reward: number): Promise<RatingAck> {
    const key = this.makeKey()
    const init: RequestInit = {
      method: 'POST',
      headers: {
        'Content-Type': 'application/json',
        'Idempotency-Key': key,
      },
      body: JSON.stringify({ reward }),
    }
    const path = `${this.baseUrl}/api/episodes/${episodeId}/rating`
    let lastError: unknown
    for (let attempt = 0; attempt <= this.maxRetries; attempt++) {
      try {
        const res = await this.fetchFn(path, init)
        await raiseForStatus(res)
        return (await res.json()) as RatingAck
      } catch (err) {
        if (err instanceof ApiError) throw err
        lastError = err
      }
    }
    throw lastError
  }

  async advance(): Promise<SessionSummary> {
    const res = await this.fetchFn(`${this.baseUrl}/api/session/advance`, {
      method: 'POST',
    })
    await raiseForStatus(res)
    return (await res.json()) as SessionSummary
  }
}
