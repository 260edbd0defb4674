/**
 * Default captioning question set and the hallucination-damping suffix
 * appended to every question sent to the vision service.
 */

export const HONESTY_SUFFIX =
  "If you are not sure say it honestly. Do not imagine any contents that " +
  "are not in the image. After the answer please clear your history.";

export const DEFAULT_QUESTIONS: string[] = [
  "Describe in detail the bang/fringe of depicted hairstyle including its directionality, texture, and coverage of face?",
  "What is the overall hairstyle depicted in the image?",
  "Does the depicted hairstyle longer than the shoulders or shorter than the shoulder?",
  "Does the depicted hairstyle have a short bang or long bang or no bang from frontal view?",
  "Does the hairstyle have a straight bang or Baby Bangs or Arched Bangs or Asymmetrical Bangs or Pin-Up Bangs or Choppy Bangs or curtain bang or side swept bang or no bang?",
  "Are there any afro features in the hairstyle or no afro features?",
  "Is the length of the hairstyle shorter than the middle of the neck or longer than the middle of the neck?",
  "What are the main geometry features of the depicted hairstyle?",
  "What is the overall shape of the depicted hairstyle?",
  "Is the hair short, medium, or long in terms of length?",
  "What is the type of depicted hairstyle?",
  "What is the length of hairstyle relative to the human body?",
  "Describe the texture and pattern of hair in the image.",
  "What is the texture of depicted hairstyle?",
  "Does the depicted hairstyle is straight or wavy or curly or kinky?",
  "Can you describe the overall flow and directionality of strands?",
  "Could you describe the bang of depicted hairstyle including its directionality and texture?",
  "Describe the main geometric features of the hairstyle depicted in the image.",
  "Is the length of a hairstyle buzz cut, pixie, ear length, chin length, neck length, shoulder length, armpit length or mid-back length?",
  "Describe actors with similar hairstyle type.",
  "Does the hairstyle cover any parts of the face? Write which exact parts.",
  "In what ways is this hairstyle a blend or combination of other popular hairstyles?",
  "Could you provide the closest types of hairstyles from which this one could be blended?",
  "How adaptable is this hairstyle for various occasions (casual, formal, athletic)?",
  "How is this hairstyle perceived in different social or professional settings?",
  "Are there historical figures who were iconic for wearing this hairstyle?",
  "Could you describe the partition of this hairstyle if it is visible?",
];
