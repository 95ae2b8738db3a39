export { embedFile, EmbedOptions, EmbedSummary } from "./embed";
export {
  Encoder,
  HashNgramEncoder,
  PromptInput,
  availableEncoders,
  l2Normalize,
  loadEncoder,
} from "./encoder";
export { parsePromptFile, headerLine, recordLine } from "./jsonl";
