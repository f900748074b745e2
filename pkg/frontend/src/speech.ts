// Voice prompts via the browser's speech synthesis, with an on-screen
// banner fallback when speech is unavailable or blocked.

export interface SpeechSink {
  speak(text: string): boolean; // true when actually spoken
}

export class BrowserSpeech implements SpeechSink {
  constructor(private readonly banner: (text: string) => void) {}

  speak(text: string): boolean {
    const synth = (globalThis as { speechSynthesis?: SpeechSynthesis }).speechSynthesis;
    const Utterance = (globalThis as { SpeechSynthesisUtterance?: typeof SpeechSynthesisUtterance })
      .SpeechSynthesisUtterance;
    if (synth && Utterance) {
      try {
        const utterance = new Utterance(text);
        utterance.rate = 1.1;
        synth.speak(utterance);
        return true;
      } catch {
        // fall through to the banner
      }
    }
    this.banner(text);
    return false;
  }
}

export function phraseFor(instrument: string): string {
  return `Check the ${instrument}.`;
}
