use crate::bars::{BarBlock, MinuteBar, SessionSpec, TradeRecord};
use crate::price::Price;

/// Result of consolidating one symbol-day of trades.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltBars {
    /// `None` when the symbol-day is untradable: some leading minutes have
    /// neither a trade nor a prior close to carry forward.
    pub block: Option<BarBlock>,
    /// Trades outside `[open, close)` of the session.
    pub discarded: usize,
}

impl BuiltBars {
    pub fn is_tradable(&self) -> bool {
        self.block.is_some()
    }
}

/// Consolidates one symbol-day of trades (sorted by timestamp) into exactly
/// one bar per session minute. Minutes without trades carry the most recent
/// close with zero volume; minutes before the first trade carry `prior_close`.
pub fn build_minute_bars(
    trades: &[TradeRecord],
    session: &SessionSpec,
    prior_close: Option<Price>,
) -> BuiltBars {
    let minutes = session.minutes_per_session();
    let mut slots: Vec<Option<MinuteBar>> = vec![None; minutes];
    let mut discarded = 0;

    for trade in trades {
        let Some(m) = session.minute_index(&trade.timestamp) else {
            discarded += 1;
            continue;
        };
        match &mut slots[m] {
            Some(bar) => {
                bar.high = bar.high.max(trade.price);
                bar.low = bar.low.min(trade.price);
                bar.close = trade.price;
                bar.volume += trade.size;
            }
            slot @ None => {
                *slot = Some(MinuteBar {
                    minute_index: m as u16,
                    open: trade.price,
                    high: trade.price,
                    low: trade.price,
                    close: trade.price,
                    volume: trade.size,
                });
            }
        }
    }

    let mut last = prior_close;
    let mut block = BarBlock::with_capacity(minutes);
    for (m, slot) in slots.iter().enumerate() {
        let bar = match slot {
            Some(bar) => *bar,
            None => match last {
                Some(close) => MinuteBar::flat(m, close),
                None => {
                    return BuiltBars {
                        block: None,
                        discarded,
                    }
                }
            },
        };
        last = Some(bar.close);
        block.push(&bar);
    }
    BuiltBars {
        block: Some(block),
        discarded,
    }
}
