export { ApiClient, ApiError } from "./api";
export { FeedbackWidget } from "./feedback";
export { createApp } from "./main";
export {
  citationDetails,
  parseChunkId,
  renderAnswerText,
  renderConversation,
  renderDataPoints,
  renderTurn,
} from "./render";
export { ChatStore, engineTurn, stripMarkers } from "./state";
export * from "./types";
