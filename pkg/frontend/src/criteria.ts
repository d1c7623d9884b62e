/** The five rating criteria the evaluator can assign, in reward order.
 *
 * The UI exposes exactly these as buttons (no free-form input), so an
 * off-scale reward can never be produced client-side; keys 1-5 are the
 * keyboard shortcuts for rapid rating.
 */

export interface RatingCriterion {
  label: string
  reward: number
  key: string
}

export const RATING_CRITERIA: readonly RatingCriterion[] = [
  { label: 'miss by a large margin', reward: 0, key: '1' },
  { label: 'miss but close (≤ 5 cm)', reward: 0.25, key: '2' },
  { label: 'hit but not good enough', reward: 0.5, key: '3' },
  { label: 'good hit (hit side pillar)', reward: 1, key: '4' },
  { label: 'good hit (above the net)', reward: 2, key: '5' },
]

export const REWARD_VALUES: readonly number[] = RATING_CRITERIA.map(
  (c) => c.reward,
)

export function isValidReward(reward: number): boolean {
  return REWARD_VALUES.includes(reward)
}

/** Reward bound to a keyboard key, or null if the key is not a shortcut. */
export function rewardForKey(key: string): number | null {
  const criterion = RATING_CRITERIA.find((c) => c.key === key)
  return criterion ? criterion.reward : null
}
